use serde::{Deserialize, Serialize};

use super::{SampleTensor, N_INPUTS, N_OUTPUTS};
use crate::error::{Error, Result};

/// Per-channel z-score statistics, fitted on training samples only.
///
/// Channels without spread get a unit standard deviation so they scale to
/// zero instead of dividing by zero. The input ranges seen in training are
/// kept to flag extrapolation at prediction time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub input_mean: [f64; N_INPUTS],
    pub input_std: [f64; N_INPUTS],
    pub output_mean: [f64; N_OUTPUTS],
    pub output_std: [f64; N_OUTPUTS],
    pub input_min: [f64; N_INPUTS],
    pub input_max: [f64; N_INPUTS],
}

fn moments<const C: usize>(rows: impl Iterator<Item = [f64; C]> + Clone) -> ([f64; C], [f64; C]) {
    let mut n = 0usize;
    let mut mean = [0.0; C];
    for r in rows.clone() {
        n += 1;
        for c in 0..C {
            mean[c] += r[c];
        }
    }
    let nf = n as f64;
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut var = [0.0; C];
    let mut scale = [0.0f64; C];
    for r in rows {
        for c in 0..C {
            let d = r[c] - mean[c];
            var[c] += d * d;
            scale[c] = scale[c].max(r[c].abs());
        }
    }
    let mut std = [1.0; C];
    for c in 0..C {
        let s = (var[c] / nf).sqrt();
        // spread at roundoff level counts as constant
        if s > 1e-12 * scale[c] && s > 0.0 {
            std[c] = s;
        }
    }
    (mean, std)
}

impl ScalerParams {
    pub fn fit<'a>(samples: impl IntoIterator<Item = &'a SampleTensor>) -> Result<Self> {
        let samples: Vec<&SampleTensor> = samples.into_iter().collect();
        if samples.iter().all(|s| s.is_empty()) {
            return Err(Error::invalid(
                "cannot fit a scaler on an empty training set",
            ));
        }
        let inputs = samples.iter().flat_map(|s| s.inputs.iter().copied());
        let outputs = samples.iter().flat_map(|s| s.outputs.iter().copied());
        let (input_mean, input_std) = moments(inputs.clone());
        let (output_mean, output_std) = moments(outputs);
        let mut input_min = [f64::INFINITY; N_INPUTS];
        let mut input_max = [f64::NEG_INFINITY; N_INPUTS];
        for r in inputs {
            for c in 0..N_INPUTS {
                input_min[c] = input_min[c].min(r[c]);
                input_max[c] = input_max[c].max(r[c]);
            }
        }
        Ok(ScalerParams {
            input_mean,
            input_std,
            output_mean,
            output_std,
            input_min,
            input_max,
        })
    }

    /// Identity transform.
    pub fn identity() -> Self {
        ScalerParams {
            input_mean: [0.0; N_INPUTS],
            input_std: [1.0; N_INPUTS],
            output_mean: [0.0; N_OUTPUTS],
            output_std: [1.0; N_OUTPUTS],
            input_min: [f64::NEG_INFINITY; N_INPUTS],
            input_max: [f64::INFINITY; N_INPUTS],
        }
    }

    pub fn scale_input(&self, row: &[f64; N_INPUTS]) -> [f64; N_INPUTS] {
        std::array::from_fn(|c| (row[c] - self.input_mean[c]) / self.input_std[c])
    }

    pub fn scale_output(&self, row: &[f64; N_OUTPUTS]) -> [f64; N_OUTPUTS] {
        std::array::from_fn(|c| (row[c] - self.output_mean[c]) / self.output_std[c])
    }

    pub fn unscale_input(&self, row: &[f64; N_INPUTS]) -> [f64; N_INPUTS] {
        std::array::from_fn(|c| row[c] * self.input_std[c] + self.input_mean[c])
    }

    pub fn unscale_output(&self, row: &[f64; N_OUTPUTS]) -> [f64; N_OUTPUTS] {
        std::array::from_fn(|c| row[c] * self.output_std[c] + self.output_mean[c])
    }

    pub fn apply(&self, s: &SampleTensor) -> SampleTensor {
        SampleTensor {
            parent: s.parent,
            child: s.child,
            inputs: s.inputs.iter().map(|r| self.scale_input(r)).collect(),
            outputs: s.outputs.iter().map(|r| self.scale_output(r)).collect(),
        }
    }

    pub fn invert(&self, s: &SampleTensor) -> SampleTensor {
        SampleTensor {
            parent: s.parent,
            child: s.child,
            inputs: s.inputs.iter().map(|r| self.unscale_input(r)).collect(),
            outputs: s.outputs.iter().map(|r| self.unscale_output(r)).collect(),
        }
    }

    /// True when any input channel leaves the fitted training range.
    pub fn is_extrapolation(&self, row: &[f64; N_INPUTS]) -> bool {
        let tol = 1e-9;
        (0..N_INPUTS).any(|c| {
            let span = (self.input_max[c] - self.input_min[c]).abs().max(1e-300);
            row[c] < self.input_min[c] - tol * span || row[c] > self.input_max[c] + tol * span
        })
    }
}
