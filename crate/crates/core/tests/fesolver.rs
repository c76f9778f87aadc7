use approx::assert_relative_eq;
use impactforge::fesolver::{
    run_simulation, run_simulation_with, stable_dt, ElementState, Hardening, Integration, Lateral,
    Loading, MaterialModel, Quad4, SimulationRecord, SolverConfig,
};
use impactforge::geometry::{mesh_design, DesignParams, RasterMesh};
use proptest::prelude::*;

fn elastic() -> MaterialModel {
    MaterialModel::elastic(2.5e9, 0.35, 1070.0)
}

/// Least-squares slope through the origin of stress against strain.
fn secant_slope(rec: &SimulationRecord, skip: usize) -> f64 {
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for k in skip..rec.len() {
        sxy += rec.nominal_strain[k] * rec.nominal_stress[k];
        sxx += rec.nominal_strain[k] * rec.nominal_strain[k];
    }
    sxy / sxx
}

fn design_mesh(
    sides: usize,
    nx: usize,
    ny: usize,
    angle_deg: f64,
    vf: f64,
    edge: f64,
) -> RasterMesh {
    let p = DesignParams::new(sides, nx, ny, angle_deg.to_radians(), vf).unwrap();
    mesh_design(&p, edge).unwrap().expect("valid design")
}

#[test]
fn confined_block_follows_constrained_modulus() {
    let (e, nu) = (2.5e9_f64, 0.35_f64);
    let oracle = e * (1.0 - nu) / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let mesh = RasterMesh::solid(0.5).unwrap();
    let cfg = SolverConfig {
        lateral: Lateral::Confined,
        ..Default::default()
    };
    let load = Loading {
        strain_rate: 0.45,
        final_strain: 0.01,
        record_points: 50,
    };
    let rec = run_simulation_with(&mesh, &elastic(), &load, &cfg).unwrap();
    let slope = secant_slope(&rec, 5);
    assert!(
        (slope / oracle - 1.0).abs() < 0.005,
        "slope {slope:e} vs {oracle:e}"
    );
}

#[test]
fn free_sides_follow_plane_strain_modulus() {
    let (e, nu) = (2.5e9_f64, 0.35_f64);
    let oracle = e / (1.0 - nu * nu);
    let mesh = RasterMesh::solid(0.5).unwrap();
    let rec = run_simulation(&mesh, &elastic(), 0.45, 0.01, 50).unwrap();
    let slope = secant_slope(&rec, 5);
    assert!(
        (slope / oracle - 1.0).abs() < 0.01,
        "slope {slope:e} vs {oracle:e}"
    );
}

#[test]
fn zero_final_strain_gives_single_zero_entry() {
    let mesh = RasterMesh::solid(1.0).unwrap();
    let rec = run_simulation(&mesh, &MaterialModel::default(), 9.1, 0.0, 50).unwrap();
    assert_eq!(rec.len(), 1);
    for v in [
        &rec.time,
        &rec.nominal_strain,
        &rec.nominal_stress,
        &rec.e_plastic,
        &rec.e_kinetic,
    ] {
        assert_eq!(v, &vec![0.0]);
    }
}

#[test]
fn record_grid_is_uniform_in_strain() {
    let mesh = RasterMesh::solid(1.0).unwrap();
    let rec = run_simulation(&mesh, &MaterialModel::default(), 9.1, 0.2, 21).unwrap();
    assert_eq!(rec.len(), 21);
    for (k, s) in rec.nominal_strain.iter().enumerate() {
        assert_relative_eq!(*s, 0.01 * k as f64, epsilon = 1e-12);
    }
    assert_relative_eq!(rec.time[20], 0.2 / 9.1, max_relative = 1e-12);
}

#[test]
fn rejects_out_of_range_loading() {
    let mesh = RasterMesh::solid(1.0).unwrap();
    let mat = MaterialModel::default();
    assert!(run_simulation(&mesh, &mat, 200.0, 0.1, 10).is_err());
    assert!(run_simulation(&mesh, &mat, 9.1, 0.3, 10).is_err());
    assert!(run_simulation(&mesh, &mat, 9.1, 0.1, 1).is_err());
}

#[test]
fn faster_loading_stiffens_the_plateau() {
    let mesh = RasterMesh::solid(1.0).unwrap();
    let mat = MaterialModel::default();
    let slow = run_simulation(&mesh, &mat, 0.45, 0.2, 41).unwrap();
    let fast = run_simulation(&mesh, &mat, 90.9, 0.2, 41).unwrap();
    // compare on the plastic plateau; the elastic ramp only carries dynamic noise
    for k in (1..slow.len()).filter(|&k| slow.nominal_strain[k] >= 0.05) {
        let (s, f) = (slow.nominal_stress[k], fast.nominal_stress[k]);
        assert!(
            f > s,
            "strain {}: fast {f:e} <= slow {s:e}",
            slow.nominal_strain[k]
        );
    }
}

#[test]
fn energy_ledger_closes_for_porous_designs() {
    let mat = MaterialModel::default();
    for (sides, nx, ny, angle, vf, rate) in
        [(6, 3, 2, 10.0, 0.08, 0.45), (3, 4, 4, 75.0, 0.05, 90.9)]
    {
        let mesh = design_mesh(sides, nx, ny, angle, vf, 0.5);
        let rec = run_simulation(&mesh, &mat, rate, 0.25, 50).unwrap();
        let res = rec.energy_residuals();
        for k in 1..rec.len() {
            assert!(
                res[k] < 0.01 * rec.w_external[k],
                "record {k}: {} of {}",
                res[k],
                rec.w_external[k]
            );
        }
        for w in rec.e_plastic.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert!(rec.e_plastic.last().unwrap() > &0.0);
        assert!(rec
            .e_elastic
            .iter()
            .chain(&rec.e_kinetic)
            .all(|e| *e >= 0.0));
    }
}

#[test]
fn reduced_integration_ledger_includes_hourglass_work() {
    let mesh = design_mesh(4, 2, 2, 20.0, 0.06, 0.5);
    let cfg = SolverConfig {
        integration: Integration::Reduced,
        ..Default::default()
    };
    let load = Loading {
        strain_rate: 9.1,
        final_strain: 0.25,
        record_points: 50,
    };
    let rec = run_simulation_with(&mesh, &MaterialModel::default(), &load, &cfg).unwrap();
    let res = rec.energy_residuals();
    for k in 1..rec.len() {
        assert!(res[k] < 0.01 * rec.w_external[k]);
    }
    assert!(*rec.e_hourglass.last().unwrap() > 0.0);
}

#[test]
fn mirrored_design_gives_same_force_history() {
    let p = DesignParams::new(5, 3, 2, 17f64.to_radians(), 0.07).unwrap();
    let mesh = mesh_design(&p, 0.5).unwrap().unwrap();
    let mirrored = mesh_design(&p.mirrored(), 0.5).unwrap().unwrap();
    assert_eq!(mirrored, mesh.mirrored());
    let mat = MaterialModel::default();
    let a = run_simulation(&mesh, &mat, 9.1, 0.25, 50).unwrap();
    let b = run_simulation(&mirrored, &mat, 9.1, 0.25, 50).unwrap();
    for (fa, fb) in a.reaction_force.iter().zip(&b.reaction_force).skip(1) {
        assert_relative_eq!(*fa, *fb, max_relative = 1e-9);
    }
}

#[test]
fn stable_dt_examples() {
    let mat = MaterialModel::default();
    let c = mat.wave_speed();
    assert_relative_eq!(c, 1936.5, max_relative = 1e-4);
    let mesh = RasterMesh::solid(0.25).unwrap();
    let dt = stable_dt(&mesh, &mat, 0.9).unwrap();
    assert_relative_eq!(dt, 0.9 * 0.25e-3 / c, max_relative = 1e-12);
    let coarse = RasterMesh::solid(0.5).unwrap();
    assert_relative_eq!(
        stable_dt(&coarse, &mat, 0.9).unwrap(),
        2.0 * dt,
        max_relative = 1e-12
    );
    // nominal 0.24 mm mesh
    let nominal = stable_dt(&RasterMesh::solid(0.24).unwrap(), &mat, 0.9).unwrap();
    assert_relative_eq!(nominal, 0.9 * 1.239e-7, max_relative = 0.005);
    assert!(stable_dt(&mesh, &mat, 0.0).is_err());
    assert!(stable_dt(&mesh, &mat, 1.5).is_err());
}

/// Drives one element in simple shear at a constant engineering rate and
/// returns (von Mises stress, plastic strain) once the response is steady.
fn steady_shear(mat: &MaterialModel, gamma_rate: f64) -> (f64, f64) {
    let h = 1e-3;
    let quad = Quad4::square(h, Integration::Full).unwrap();
    let mut states = vec![ElementState::default(); quad.n_points()];
    let dt = 1e-5;
    // ux = gamma * y on the top nodes (corners ordered bl, br, tr, tl)
    let step = gamma_rate * dt * h;
    let du = [0.0, 0.0, 0.0, 0.0, step, 0.0, step, 0.0];
    let steps = (1.5 / (gamma_rate * dt)) as usize;
    for _ in 0..steps {
        quad.internal_force(&du, &mut states, mat, dt).unwrap();
    }
    (states[0].von_mises(), states[0].epbar)
}

#[test]
fn overstress_law_recovered_under_steady_shear() {
    for (d, n_exp) in [(100.0, 2.0), (10.0, 1.0), (1000.0, 3.0)] {
        let mat = MaterialModel {
            d,
            n_exp,
            ..MaterialModel::default()
        };
        let gamma_rate = 50.0;
        let (q, epbar) = steady_shear(&mat, gamma_rate);
        // equivalent plastic rate of simple shear once elastic strain is steady
        let rate = gamma_rate / 3f64.sqrt();
        let expected = mat.yield_stress(epbar) * (1.0 + (rate / d).powf(1.0 / n_exp));
        assert!(
            (q / expected - 1.0).abs() < 0.01,
            "D {d} n {n_exp}: q {q:e} vs {expected:e}"
        );
    }
}

#[test]
fn perfectly_plastic_shear_is_rate_independent_in_slow_limit() {
    let mat = MaterialModel {
        hardening: Hardening::constant(50e6).unwrap(),
        d: 1e6,
        ..MaterialModel::default()
    };
    let (q, _) = steady_shear(&mat, 1.0);
    assert_relative_eq!(q, 50e6, max_relative = 2e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn plastic_strain_never_decreases(incs in prop::collection::vec((-2e-6f64..2e-6, -2e-6f64..2e-6, -2e-6f64..2e-6), 1..60)) {
        let mat = MaterialModel::default();
        let quad = Quad4::square(1e-3, Integration::Full).unwrap();
        let mut states = vec![ElementState::default(); quad.n_points()];
        for (a, b, c) in incs {
            // alternate compression / shear / extension of the top edge
            let du = [0.0, 0.0, 0.0, 0.0, 50.0 * a, 50.0 * b, 50.0 * a + c, 50.0 * b];
            let before: Vec<f64> = states.iter().map(|s| s.epbar).collect();
            quad.internal_force(&du, &mut states, &mat, 1e-4).unwrap();
            for (s, e0) in states.iter().zip(before) {
                prop_assert!(s.epbar >= e0);
                let rate = (s.epbar - e0) / 1e-4;
                if rate > 0.0 {
                    let bound = mat.flow_stress(s.epbar, rate);
                    prop_assert!(s.von_mises() <= bound * (1.0 + 1e-9));
                }
            }
        }
    }
}
