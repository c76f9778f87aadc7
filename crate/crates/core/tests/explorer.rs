use impactforge::dataset::ScalerParams;
use impactforge::explorer::{fe_sea, sweep, validate_extremes, SweepGrid, SweepRecord};
use impactforge::fesolver::{MaterialModel, SolverConfig};
use impactforge::geometry::{mesh_design, DesignParams};
use impactforge::surrogate::{Architecture, SurrogateModel};

fn small_grid() -> SweepGrid {
    SweepGrid {
        sides: vec![3, 4],
        max_nx: 8,
        max_ny: 2,
        vf_bins: 4,
        angle_bins: 8,
        rates: vec![0.45, 90.9],
        ..Default::default()
    }
}

#[test]
fn sweep_is_deterministic_and_ordered() {
    let model = SurrogateModel::init(
        &Architecture {
            n_inputs: 8,
            hidden: vec![8, 8],
            n_outputs: 4,
        },
        4,
    )
    .unwrap();
    let scaler = ScalerParams::identity();
    let grid = small_grid();
    let mat = MaterialModel::default();
    let a = sweep(&model, &scaler, &grid, &mat).unwrap();
    let b = sweep(&model, &scaler, &grid, &mat).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), grid.cardinality() * 2);
    for (k, r) in a.iter().enumerate() {
        assert_eq!(r.design_index, k / 2);
        assert_eq!(r.rate, grid.rates[k % 2]);
        assert_eq!(r.valid, r.sea.is_some());
        if let Some(s) = r.sea {
            assert!(s >= 0.0 && s.is_finite());
        }
    }
    // large triangles in narrow cells leave their region at some angles
    assert!(a.iter().any(|r| !r.valid));
    assert!(a.iter().any(|r| r.valid));
}

#[test]
fn square_fe_sea_is_quarter_turn_periodic() {
    let grid = SweepGrid::default();
    let p = DesignParams::new(4, 2, 2, grid.angle_at(2), grid.vf_at(30)).unwrap();
    let q = DesignParams {
        angle: grid.angle_at(7),
        ..p
    };
    let edge = 0.5;
    assert_eq!(
        mesh_design(&p, edge).unwrap().unwrap(),
        mesh_design(&q, edge).unwrap().unwrap()
    );
    let mat = MaterialModel::default();
    let cfg = SolverConfig {
        max_steps: Some(1500),
        ..Default::default()
    };
    let a = fe_sea(&p, 90.9, 0.05, &mat, edge, 11, &cfg).unwrap();
    let b = fe_sea(&q, 90.9, 0.05, &mat, edge, 11, &cfg).unwrap();
    assert!(a > 0.0);
    assert_eq!(a, b);
}

#[test]
fn validation_report_has_two_rows_per_rate() {
    let grid = SweepGrid::default();
    let mk = |i: usize, rate: f64, sea: f64| {
        let p = grid.params_at(i).unwrap();
        SweepRecord {
            design_index: i,
            params: p,
            rate,
            sea: Some(sea),
            valid: true,
            extrapolated: false,
        }
    };
    // solid-looking small tubules at both rates
    let base = grid
        .design_index(&DesignParams::new(4, 1, 1, grid.angle_at(0), grid.vf_at(0)).unwrap())
        .unwrap();
    let recs = vec![
        mk(base, 0.45, 10.0),
        mk(base + 1, 0.45, 20.0),
        mk(base, 90.9, 30.0),
        mk(base + 2, 90.9, 5.0),
    ];
    let cfg = SolverConfig {
        max_steps: Some(800),
        ..Default::default()
    };
    let rows = validate_extremes(
        &recs,
        &[0.45, 90.9],
        0.02,
        &MaterialModel::default(),
        1.0,
        5,
        &cfg,
        0.1,
    )
    .unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0].design_index, base + 1);
    assert_eq!(rows[1].design_index, base);
    for r in &rows {
        let fe = r.sea_fe.expect("simulation succeeds");
        assert!(fe > 0.0);
        let rel = (r.sea_pred - fe).abs() / fe;
        assert!((r.rel_err.unwrap() - rel).abs() < 1e-12);
        assert_eq!(r.pass, rel <= 0.1);
    }
    let json = serde_json::to_value(&rows).unwrap();
    for key in ["design_index", "rate", "sea_fe", "sea_pred", "rel_err"] {
        assert!(json[0].get(key).is_some(), "{key}");
    }
}

#[test]
fn failed_simulation_is_a_failed_row() {
    let grid = SweepGrid::default();
    let p = grid.params_at(100).unwrap();
    let recs = vec![SweepRecord {
        design_index: 100,
        params: p,
        rate: 9.1,
        sea: Some(1.0),
        valid: true,
        extrapolated: false,
    }];
    // a final strain beyond the solver limit makes every run fail
    let rows = validate_extremes(
        &recs,
        &[9.1],
        0.3,
        &MaterialModel::default(),
        1.0,
        5,
        &SolverConfig::default(),
        0.1,
    )
    .unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows
        .iter()
        .all(|r| !r.pass && r.sea_fe.is_none() && r.error.is_some()));
}
