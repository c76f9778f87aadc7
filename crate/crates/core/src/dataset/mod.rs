//! Simulation records to fixed-length training sequences.
//!
//! Every sample is resampled onto [`SEQ_LEN`] uniformly spaced nominal strains
//! ending at the run's final strain. Inputs carry the five design parameters
//! (constant in time) followed by time, strain and strain rate; outputs are
//! nominal stress, plastic and elastic energy, and the absorbed energy ∫F dx.

mod scaler;
mod split;
mod store;

pub use scaler::ScalerParams;
pub use split::{split, DatasetSplit, Partition};
pub use store::{build_dataset, AugmentConfig, Dataset, DatasetManifest};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fesolver::SimulationRecord;
use crate::geometry::{DesignFile, DesignParams, SPECIMEN_SIZE};

pub const SEQ_LEN: usize = 50;
pub const N_INPUTS: usize = 8;
pub const N_OUTPUTS: usize = 4;
/// Leading input channels that hold design parameters.
pub const N_DESIGN: usize = 5;

pub const INPUT_NAMES: [&str; N_INPUTS] = [
    "sides",
    "nx",
    "ny",
    "angle_rad",
    "vf",
    "time_s",
    "strain",
    "rate_per_s",
];
pub const OUTPUT_NAMES: [&str; N_OUTPUTS] = ["stress_Pa", "E_pl_J", "E_el_J", "E_abs_J"];

/// Input channel indices.
pub const TIME: usize = 5;
pub const STRAIN: usize = 6;
pub const RATE: usize = 7;
/// Output channel indices.
pub const STRESS: usize = 0;
pub const E_PLASTIC: usize = 1;
pub const E_ELASTIC: usize = 2;
pub const ABSORBED: usize = 3;

/// One finished FE run as stored by a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: usize,
    pub design: DesignFile,
    pub strain_rate: f64,
    #[serde(flatten)]
    pub record: SimulationRecord,
}

/// Paired input/output sequences of equal length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTensor {
    /// Campaign run the sample derives from.
    pub parent: usize,
    /// 0 for the run itself, 1.. for augmented children.
    pub child: usize,
    pub inputs: Vec<[f64; N_INPUTS]>,
    pub outputs: Vec<[f64; N_OUTPUTS]>,
}

impl SampleTensor {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn final_strain(&self) -> f64 {
        self.inputs.last().map_or(0.0, |r| r[STRAIN])
    }

    pub fn strain(&self) -> Vec<f64> {
        self.inputs.iter().map(|r| r[STRAIN]).collect()
    }

    pub fn output_channel(&self, c: usize) -> Vec<f64> {
        self.outputs.iter().map(|r| r[c]).collect()
    }

    pub fn design(&self) -> Result<DesignParams> {
        let r = self
            .inputs
            .first()
            .ok_or_else(|| Error::invalid("empty sample"))?;
        DesignParams::new(r[0] as usize, r[1] as usize, r[2] as usize, r[3], r[4])
    }

    pub fn strain_rate(&self) -> f64 {
        self.inputs.first().map_or(0.0, |r| r[RATE])
    }

    /// Checks the structural invariants of a sample.
    pub fn validate(&self) -> Result<()> {
        if self.inputs.len() != self.outputs.len() || self.inputs.len() < 2 {
            return Err(Error::invalid(
                "sample needs matching sequences of length >= 2",
            ));
        }
        let first = self.inputs[0];
        if self
            .inputs
            .iter()
            .any(|r| r[..N_DESIGN] != first[..N_DESIGN] || r[RATE] != first[RATE])
        {
            return Err(Error::invalid("design and rate channels must be constant"));
        }
        if self.inputs.windows(2).any(|w| w[1][STRAIN] <= w[0][STRAIN]) {
            return Err(Error::invalid("strain channel must increase strictly"));
        }
        Ok(())
    }
}

/// Linear interpolation on an increasing grid `xs`, clamped at the ends.
pub fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let k = xs.partition_point(|&v| v <= x);
    let (x0, x1) = (xs[k - 1], xs[k]);
    let t = (x - x0) / (x1 - x0);
    ys[k - 1] + t * (ys[k] - ys[k - 1])
}

/// `n` uniformly spaced points on [0, end] with exact endpoints.
pub fn strain_grid(end: f64, n: usize) -> Vec<f64> {
    let last = (n - 1) as f64;
    (0..n)
        .map(|k| {
            if k + 1 == n {
                end
            } else {
                end * k as f64 / last
            }
        })
        .collect()
}

/// Cumulative trapezoid integral of `f` over `x`.
pub fn cumulative_trapezoid(x: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..x.len() {
        acc += 0.5 * (f[k] + f[k - 1]) * (x[k] - x[k - 1]);
        out.push(acc);
    }
    out
}

/// Resamples a run onto `t` uniformly spaced strains.
pub fn downsample(run: &RunRecord, t: usize) -> Result<SampleTensor> {
    let rec = &run.record;
    if rec.len() < 2 {
        return Err(Error::invalid(format!(
            "run {} has fewer than two records",
            run.id
        )));
    }
    if t < 2 {
        return Err(Error::invalid("sequence length must be at least 2"));
    }
    let design = DesignParams::try_from(run.design)?;
    let strain = &rec.nominal_strain;
    if strain.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(format!(
            "run {} strain is not increasing",
            run.id
        )));
    }
    let height_m = SPECIMEN_SIZE * 1e-3;
    let disp: Vec<f64> = strain.iter().map(|e| e * height_m).collect();
    let absorbed = cumulative_trapezoid(&disp, &rec.reaction_force);

    let grid = strain_grid(rec.final_strain(), t);
    let mut inputs = Vec::with_capacity(t);
    let mut outputs = Vec::with_capacity(t);
    for &e in &grid {
        inputs.push([
            design.sides as f64,
            design.nx as f64,
            design.ny as f64,
            design.angle,
            design.vf,
            interp(strain, &rec.time, e),
            e,
            run.strain_rate,
        ]);
        outputs.push([
            interp(strain, &rec.nominal_stress, e),
            interp(strain, &rec.e_plastic, e),
            interp(strain, &rec.e_elastic, e),
            interp(strain, &absorbed, e),
        ]);
    }
    Ok(SampleTensor {
        parent: run.id,
        child: 0,
        inputs,
        outputs,
    })
}

/// Re-interpolates `sample` onto [0, end] with the same length.
pub fn truncate(sample: &SampleTensor, end: f64, child: usize) -> Result<SampleTensor> {
    let parent_end = sample.final_strain();
    if !(end > 0.0 && end <= parent_end) {
        return Err(Error::invalid(format!(
            "truncation strain {end} outside (0, {parent_end}]"
        )));
    }
    let xs = sample.strain();
    let n = sample.len();
    let first = sample.inputs[0];
    let time: Vec<f64> = sample.inputs.iter().map(|r| r[TIME]).collect();
    let outs: Vec<Vec<f64>> = (0..N_OUTPUTS).map(|c| sample.output_channel(c)).collect();
    let grid = strain_grid(end, n);
    let mut inputs = Vec::with_capacity(n);
    let mut outputs = Vec::with_capacity(n);
    for &e in &grid {
        let mut row = first;
        row[TIME] = interp(&xs, &time, e);
        row[STRAIN] = e;
        inputs.push(row);
        let mut o = [0.0; N_OUTPUTS];
        for (c, ys) in outs.iter().enumerate() {
            o[c] = interp(&xs, ys, e);
        }
        outputs.push(o);
    }
    Ok(SampleTensor {
        parent: sample.parent,
        child,
        inputs,
        outputs,
    })
}

/// `k` children truncated at final strains drawn uniformly from
/// [`lo`, `hi`]. Children are numbered 1..=k.
pub fn augment<R: Rng + ?Sized>(
    sample: &SampleTensor,
    k: usize,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Result<Vec<SampleTensor>> {
    if !(lo < hi && lo > 0.0) {
        return Err(Error::invalid(format!(
            "augmentation range [{lo}, {hi}] is empty"
        )));
    }
    if hi > sample.final_strain() + 1e-12 {
        return Err(Error::invalid(format!(
            "augmentation strain {hi} beyond the sample's final strain {}",
            sample.final_strain()
        )));
    }
    let hi = hi.min(sample.final_strain());
    (1..=k)
        .map(|child| {
            let end = rng.random_range(lo..=hi);
            truncate(sample, end, child)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Synthetic run with stress linear in strain and constant force.
    pub(crate) fn linear_run(n: usize, final_strain: f64, rate: f64) -> RunRecord {
        let strain = strain_grid(final_strain, n);
        let force = 5e5;
        let record = SimulationRecord {
            time: strain.iter().map(|e| e / rate).collect(),
            nominal_stress: strain.iter().map(|e| 4e9 * e).collect(),
            reaction_force: vec![force; n],
            e_plastic: strain.iter().map(|e| 3.0 * e).collect(),
            e_elastic: strain.iter().map(|e| e * e).collect(),
            e_kinetic: vec![0.0; n],
            w_external: vec![0.0; n],
            e_hourglass: vec![0.0; n],
            nominal_strain: strain,
            dt_s: 1e-6,
            steps: 100,
            mass_scale: 1.0,
        };
        RunRecord {
            id: 7,
            design: DesignFile {
                sides: 4,
                nx: 2,
                ny: 3,
                angle_deg: 30.0,
                vf: 0.05,
            },
            strain_rate: rate,
            record,
        }
    }

    #[test]
    fn uniform_record_of_target_length_is_unchanged() {
        let run = linear_run(SEQ_LEN, 0.25, 9.1);
        let s = downsample(&run, SEQ_LEN).unwrap();
        for k in 0..SEQ_LEN {
            assert_relative_eq!(
                s.inputs[k][STRAIN],
                run.record.nominal_strain[k],
                max_relative = 1e-14
            );
            assert_relative_eq!(
                s.outputs[k][0],
                run.record.nominal_stress[k],
                max_relative = 1e-12
            );
            assert_relative_eq!(
                s.outputs[k][2],
                run.record.e_elastic[k],
                max_relative = 1e-12,
                epsilon = 1e-300
            );
        }
        s.validate().unwrap();
    }

    #[test]
    fn linear_curve_stays_on_the_line() {
        let run = linear_run(500, 0.2, 1.0);
        let s = downsample(&run, SEQ_LEN).unwrap();
        for r in 0..SEQ_LEN {
            assert_relative_eq!(
                s.outputs[r][0],
                4e9 * s.inputs[r][STRAIN],
                max_relative = 1e-12,
                epsilon = 1e-3
            );
            assert_relative_eq!(s.inputs[r][TIME], s.inputs[r][STRAIN], max_relative = 1e-12);
        }
        assert_eq!(s.final_strain(), 0.2);
    }

    #[test]
    fn constant_force_absorbs_force_times_displacement() {
        let run = linear_run(80, 0.25, 9.1);
        let s = downsample(&run, SEQ_LEN).unwrap();
        let d = 0.25 * 11e-3;
        assert_relative_eq!(
            s.outputs[SEQ_LEN - 1][ABSORBED],
            5e5 * d,
            max_relative = 1e-12
        );
    }

    #[test]
    fn design_channels_are_constant() {
        let s = downsample(&linear_run(60, 0.25, 2.0), SEQ_LEN).unwrap();
        let d = s.design().unwrap();
        assert_eq!((d.sides, d.nx, d.ny), (4, 2, 3));
        assert_relative_eq!(d.angle, 30f64.to_radians());
        assert_eq!(s.strain_rate(), 2.0);
    }

    #[test]
    fn short_record_rejected() {
        let mut run = linear_run(10, 0.25, 1.0);
        run.record = SimulationRecord::default();
        assert!(downsample(&run, SEQ_LEN).is_err());
    }

    #[test]
    fn child_at_parent_strain_is_the_parent() {
        let s = downsample(&linear_run(200, 0.25, 9.1), SEQ_LEN).unwrap();
        let c = truncate(&s, 0.25, 1).unwrap();
        assert_eq!(c.inputs, s.inputs);
        assert_eq!(c.outputs, s.outputs);
    }

    #[test]
    fn children_end_at_their_strain_and_keep_slopes() {
        let s = downsample(&linear_run(200, 0.25, 9.1), SEQ_LEN).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let kids = augment(&s, 20, 0.10, 0.25, &mut rng).unwrap();
        assert_eq!(kids.len(), 20);
        for (i, c) in kids.iter().enumerate() {
            assert_eq!(c.child, i + 1);
            let end = c.final_strain();
            assert!((0.10..=0.25).contains(&end));
            assert_eq!(c.len(), SEQ_LEN);
            for r in 0..SEQ_LEN {
                let e = c.inputs[r][STRAIN];
                assert_relative_eq!(
                    c.outputs[r][1],
                    3.0 * e,
                    max_relative = 1e-12,
                    epsilon = 1e-15
                );
                assert_eq!(c.inputs[r][RATE], 9.1);
            }
            c.validate().unwrap();
        }
    }

    #[test]
    fn augmentation_is_seeded() {
        let s = downsample(&linear_run(100, 0.25, 9.1), SEQ_LEN).unwrap();
        let a = augment(&s, 5, 0.1, 0.25, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = augment(&s, 5, 0.1, 0.25, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!(augment(&s, 5, 0.1, 0.3, &mut ChaCha8Rng::seed_from_u64(9)).is_err());
    }

    #[test]
    fn interp_clamps_and_hits_nodes() {
        let xs = [0.0, 1.0, 3.0];
        let ys = [1.0, 3.0, 7.0];
        assert_eq!(interp(&xs, &ys, -1.0), 1.0);
        assert_eq!(interp(&xs, &ys, 5.0), 7.0);
        assert_eq!(interp(&xs, &ys, 1.0), 3.0);
        assert_eq!(interp(&xs, &ys, 2.0), 5.0);
    }
}
