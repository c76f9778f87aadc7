//! Design-space sweeps with the surrogate: SEA maps, correlations and FE
//! cross-checks of the extreme designs.

mod maps;
mod sweep;
mod validate;

pub use maps::{
    angle_periodicity, emit_maps, write_angle_trend, write_svg, write_sweep_csv, MapFiles,
    Periodicity, SWEEP_HEADER,
};
pub use sweep::{correlations, sweep, CorrelationReport, SweepRecord};
pub use validate::{fe_sea, validate_extremes, ValidationRow};

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DesignParams, SPECIMEN_SIZE};

/// Enumerated design space. Volume fraction and angle are split into equal
/// intervals evaluated at their midpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub sides: Vec<usize>,
    pub max_nx: usize,
    pub max_ny: usize,
    pub vf_range: (f64, f64),
    pub vf_bins: usize,
    pub angle_bins: usize,
    /// Nominal strain rates, 1/s.
    pub rates: Vec<f64>,
    pub final_strain: f64,
    /// Keep only volume-fraction bins whose midpoint falls in this range.
    pub vf_filter: Option<(f64, f64)>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            sides: vec![3, 4, 5, 6],
            max_nx: 8,
            max_ny: 8,
            vf_range: (0.01, 0.10),
            vf_bins: 40,
            angle_bins: 20,
            rates: vec![0.45, 9.1, 90.9],
            final_strain: 0.25,
            vf_filter: None,
        }
    }
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.sides.is_empty()
            || self.max_nx == 0
            || self.max_ny == 0
            || self.vf_bins == 0
            || self.angle_bins == 0
        {
            return Err(Error::invalid("sweep grid has an empty axis"));
        }
        if !(self.vf_range.0 < self.vf_range.1) {
            return Err(Error::invalid("sweep vf range is empty"));
        }
        if self.rates.iter().any(|r| !(*r > 0.0)) || !(self.final_strain > 0.0) {
            return Err(Error::invalid(
                "sweep rates and final strain must be positive",
            ));
        }
        Ok(())
    }

    /// Grid points per rate before any filter or validity check.
    pub fn cardinality(&self) -> usize {
        self.sides.len() * self.max_nx * self.max_ny * self.vf_bins * self.angle_bins
    }

    pub fn vf_at(&self, bin: usize) -> f64 {
        let (lo, hi) = self.vf_range;
        lo + (bin as f64 + 0.5) * (hi - lo) / self.vf_bins as f64
    }

    pub fn angle_at(&self, bin: usize) -> f64 {
        (bin as f64 + 0.5) * TAU / self.angle_bins as f64
    }

    fn bin_of(value: f64, lo: f64, width: f64, bins: usize, what: &str) -> Result<usize> {
        let pos = (value - lo) / width - 0.5;
        let bin = pos.round();
        if (pos - bin).abs() > 1e-6 || bin < 0.0 || bin >= bins as f64 {
            return Err(Error::invalid(format!(
                "{what} {value} is not a grid midpoint"
            )));
        }
        Ok(bin as usize)
    }

    /// Mixed-radix ordinal of a grid point.
    pub fn design_index(&self, p: &DesignParams) -> Result<usize> {
        let s = self
            .sides
            .iter()
            .position(|&n| n == p.sides)
            .ok_or_else(|| Error::invalid(format!("sides {} not on the grid", p.sides)))?;
        if p.nx == 0 || p.nx > self.max_nx || p.ny == 0 || p.ny > self.max_ny {
            return Err(Error::invalid(format!(
                "tubule counts {}x{} not on the grid",
                p.nx, p.ny
            )));
        }
        let (lo, hi) = self.vf_range;
        let vf_bin = Self::bin_of(
            p.vf,
            lo,
            (hi - lo) / self.vf_bins as f64,
            self.vf_bins,
            "vf",
        )?;
        let angle_bin = Self::bin_of(
            p.angle,
            0.0,
            TAU / self.angle_bins as f64,
            self.angle_bins,
            "angle",
        )?;
        Ok(
            (((s * self.max_nx + (p.nx - 1)) * self.max_ny + (p.ny - 1)) * self.vf_bins + vf_bin)
                * self.angle_bins
                + angle_bin,
        )
    }

    /// Inverse of [`Self::design_index`].
    pub fn params_at(&self, index: usize) -> Result<DesignParams> {
        if index >= self.cardinality() {
            return Err(Error::invalid(format!(
                "design index {index} beyond grid size {}",
                self.cardinality()
            )));
        }
        let mut rest = index;
        let angle_bin = rest % self.angle_bins;
        rest /= self.angle_bins;
        let vf_bin = rest % self.vf_bins;
        rest /= self.vf_bins;
        let ny = rest % self.max_ny + 1;
        rest /= self.max_ny;
        let nx = rest % self.max_nx + 1;
        rest /= self.max_nx;
        DesignParams::new(
            self.sides[rest],
            nx,
            ny,
            self.angle_at(angle_bin),
            self.vf_at(vf_bin),
        )
    }

    /// Indices surviving the volume-fraction filter, ascending.
    pub fn indices(&self) -> Vec<usize> {
        let keep: Vec<bool> = (0..self.vf_bins)
            .map(|b| match self.vf_filter {
                Some((lo, hi)) => {
                    let v = self.vf_at(b);
                    v >= lo && v <= hi
                }
                None => true,
            })
            .collect();
        (0..self.cardinality())
            .filter(|i| keep[(i / self.angle_bins) % self.vf_bins])
            .collect()
    }
}

/// Area under the force–displacement curve per unit thickness, J/m, with
/// F = stress × 11 mm and x = strain × 11 mm.
pub fn absorbed_energy(strain: &[f64], stress: &[f64]) -> Result<f64> {
    if strain.len() != stress.len() || strain.is_empty() {
        return Err(Error::invalid(
            "strain and stress series must match and be non-empty",
        ));
    }
    let side = SPECIMEN_SIZE * 1e-3;
    let mut e = 0.0;
    for k in 1..strain.len() {
        e += 0.5 * (stress[k] + stress[k - 1]) * side * (strain[k] - strain[k - 1]) * side;
    }
    Ok(e)
}

/// Specimen mass per unit thickness, kg/m, from the exact solid area.
pub fn specimen_mass(params: &DesignParams, rho: f64) -> f64 {
    rho * params.solid_area() * 1e-6
}

/// Energy per unit thickness divided by mass per unit thickness.
pub fn sea_from_mass(energy_j_per_m: f64, mass_kg_per_m: f64) -> Result<f64> {
    if !(mass_kg_per_m > 0.0) {
        return Err(Error::invalid(format!(
            "specimen mass {mass_kg_per_m} must be positive"
        )));
    }
    Ok(energy_j_per_m / mass_kg_per_m)
}

/// Specific energy absorption, J/kg.
pub fn sea(strain: &[f64], stress: &[f64], params: &DesignParams, rho: f64) -> Result<f64> {
    sea_from_mass(absorbed_energy(strain, stress)?, specimen_mass(params, rho))
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid(
            "pearson needs two equal series of length >= 2",
        ));
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Highest- and lowest-SEA valid records at `rate`; ties go to the lower
/// design index.
pub fn best_worst(records: &[SweepRecord], rate: f64) -> Result<(SweepRecord, SweepRecord)> {
    let mut best: Option<&SweepRecord> = None;
    let mut worst: Option<&SweepRecord> = None;
    for r in records.iter().filter(|r| r.rate == rate) {
        let Some(s) = r.sea else { continue };
        let better = |cur: Option<&SweepRecord>, cmp: fn(f64, f64) -> bool| match cur {
            None => true,
            Some(c) => {
                let cs = c.sea.expect("only valid records kept");
                cmp(s, cs) || (s == cs && r.design_index < c.design_index)
            }
        };
        if better(best, |a, b| a > b) {
            best = Some(r);
        }
        if better(worst, |a, b| a < b) {
            worst = Some(r);
        }
    }
    match (best, worst) {
        (Some(b), Some(w)) => Ok((b.clone(), w.clone())),
        _ => Err(Error::invalid(format!(
            "no valid sweep record at rate {rate}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn grid_size() {
        assert_eq!(SweepGrid::default().cardinality(), 204_800);
    }

    #[test]
    fn index_corners() {
        let g = SweepGrid::default();
        let first = DesignParams::new(3, 1, 1, g.angle_at(0), g.vf_at(0)).unwrap();
        assert_eq!(g.design_index(&first).unwrap(), 0);
        let last = DesignParams::new(6, 8, 8, g.angle_at(19), g.vf_at(39)).unwrap();
        assert_eq!(g.design_index(&last).unwrap(), 204_799);
        assert_eq!(g.params_at(204_799).unwrap(), last);
        assert!(g.params_at(204_800).is_err());
    }

    #[test]
    fn midpoints() {
        let g = SweepGrid::default();
        assert_relative_eq!(g.vf_at(0), 0.010_000_0 + 0.001_125, max_relative = 1e-12);
        assert_relative_eq!(g.angle_at(0).to_degrees(), 9.0, max_relative = 1e-12);
    }

    #[test]
    fn off_grid_rejected() {
        let g = SweepGrid::default();
        let p = DesignParams::new(4, 2, 2, 0.0, g.vf_at(3)).unwrap();
        assert!(g.design_index(&p).is_err());
        let p = DesignParams::new(4, 2, 2, g.angle_at(1), 0.05).unwrap();
        assert!(g.design_index(&p).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn index_round_trip(i in 0usize..204_800) {
            let g = SweepGrid::default();
            let p = g.params_at(i).unwrap();
            prop_assert_eq!(g.design_index(&p).unwrap(), i);
        }
    }

    #[test]
    fn vf_filter_keeps_matching_bins() {
        let g = SweepGrid {
            vf_filter: Some((0.045, 0.05)),
            ..Default::default()
        };
        let idx = g.indices();
        assert!(!idx.is_empty());
        for &i in idx.iter().step_by(97) {
            let vf = g.params_at(i).unwrap().vf;
            assert!((0.045..=0.05).contains(&vf));
        }
        // bins with midpoints 0.045625 and 0.047875 survive
        assert_eq!(idx.len(), 204_800 / 40 * 2);
    }

    #[test]
    fn constant_force_sea() {
        // 100 N/m over 1 mm with 1 g/m: 0.1 J/m / 1e-3 kg/m
        let side = SPECIMEN_SIZE * 1e-3;
        let stress = vec![100.0 / side; 2];
        let strain = vec![0.0, 1e-3 / side];
        let e = absorbed_energy(&strain, &stress).unwrap();
        assert_relative_eq!(e, 0.1, max_relative = 1e-12);
        assert_relative_eq!(sea_from_mass(e, 1e-3).unwrap(), 100.0, max_relative = 1e-12);
        assert!(sea_from_mass(e, 0.0).is_err());
    }

    #[test]
    fn sea_scaling() {
        let p = DesignParams::new(4, 2, 2, 0.3, 0.05).unwrap();
        let strain = [0.0, 0.1, 0.2];
        assert_eq!(sea(&strain, &[0.0; 3], &p, 1070.0).unwrap(), 0.0);
        let stress = [0.0, 5e7, 6e7];
        let a = sea(&strain, &stress, &p, 1000.0).unwrap();
        let b = sea(&strain, &stress, &p, 2000.0).unwrap();
        assert_relative_eq!(a, 2.0 * b, max_relative = 1e-12);
        assert_relative_eq!(
            specimen_mass(&p, 1000.0),
            1000.0 * (121.0 - 5.0) * 1e-6,
            max_relative = 1e-12
        );
    }

    #[test]
    fn pearson_cases() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert_relative_eq!(pearson(&x, &y).unwrap(), 1.0, max_relative = 1e-14);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_relative_eq!(pearson(&x, &neg).unwrap(), -1.0, max_relative = 1e-14);
        // centred and orthogonal by construction
        let a = [1.0, -1.0, 1.0, -1.0];
        let b = [1.0, 1.0, -1.0, -1.0];
        assert!(pearson(&a, &b).unwrap().abs() < 1e-12);
        assert!(matches!(
            pearson(&x, &[3.0; 10]),
            Err(Error::UndefinedCorrelation)
        ));
        assert!(pearson(&[1.0], &[2.0]).is_err());
    }

    fn rec(i: usize, sea: Option<f64>) -> SweepRecord {
        SweepRecord {
            design_index: i,
            params: DesignParams::new(4, 1, 1, 0.1, 0.05).unwrap(),
            rate: 9.1,
            sea,
            valid: sea.is_some(),
            extrapolated: false,
        }
    }

    #[test]
    fn extremes() {
        let one = [rec(5, Some(3.0))];
        let (b, w) = best_worst(&one, 9.1).unwrap();
        assert_eq!((b.design_index, w.design_index), (5, 5));
        let three = [
            rec(1, Some(2.0)),
            rec(2, Some(7.0)),
            rec(3, None),
            rec(4, Some(1.0)),
        ];
        let (b, w) = best_worst(&three, 9.1).unwrap();
        assert_eq!((b.design_index, w.design_index), (2, 4));
        let tie = [rec(9, Some(4.0)), rec(3, Some(4.0))];
        let (b, w) = best_worst(&tie, 9.1).unwrap();
        assert_eq!((b.design_index, w.design_index), (3, 3));
        assert!(best_worst(&three, 0.45).is_err());
    }
}
