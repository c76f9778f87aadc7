use ndarray::Array2;

use super::model::{unpack, SurrogateModel};
use crate::dataset::{strain_grid, ScalerParams, N_INPUTS, N_OUTPUTS, SEQ_LEN};
use crate::error::{Error, Result};
use crate::geometry::DesignParams;

/// Unscaled surrogate output for one design.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub strain: Vec<f64>,
    /// Rows of (stress Pa, E_pl J/m, E_el J/m, E_abs J/m).
    pub outputs: Vec<[f64; N_OUTPUTS]>,
    /// Some input left the range seen in training.
    pub extrapolated: bool,
}

impl Prediction {
    pub fn stress(&self) -> Vec<f64> {
        self.outputs.iter().map(|r| r[0]).collect()
    }
}

/// Raw input rows for a design loaded at `rate` up to `final_strain`.
pub fn design_inputs(
    design: &DesignParams,
    rate: f64,
    final_strain: f64,
    steps: usize,
) -> Vec<[f64; N_INPUTS]> {
    strain_grid(final_strain, steps)
        .into_iter()
        .map(|e| {
            [
                design.sides as f64,
                design.nx as f64,
                design.ny as f64,
                design.angle,
                design.vf,
                e / rate,
                e,
                rate,
            ]
        })
        .collect()
}

pub fn predict(
    model: &SurrogateModel,
    scaler: &ScalerParams,
    design: &DesignParams,
    rate: f64,
    final_strain: f64,
) -> Result<Prediction> {
    Ok(predict_many(model, scaler, &[(*design, rate)], final_strain)?.remove(0))
}

/// Batched prediction; one forward pass for all queries.
pub fn predict_many(
    model: &SurrogateModel,
    scaler: &ScalerParams,
    queries: &[(DesignParams, f64)],
    final_strain: f64,
) -> Result<Vec<Prediction>> {
    if queries.is_empty() {
        return Ok(Vec::new());
    }
    if !(final_strain > 0.0) {
        return Err(Error::invalid("final strain must be positive"));
    }
    if model.n_inputs() != N_INPUTS || model.n_outputs() != N_OUTPUTS {
        return Err(Error::invalid(
            "model does not match the 8-in / 4-out sample layout",
        ));
    }
    let steps = SEQ_LEN;
    let batch = queries.len();
    let mut x = Array2::zeros((steps * batch, N_INPUTS));
    let mut flags = vec![false; batch];
    for (i, (design, rate)) in queries.iter().enumerate() {
        if !(*rate > 0.0) {
            return Err(Error::invalid(format!(
                "strain rate {rate} must be positive"
            )));
        }
        for (t, row) in design_inputs(design, *rate, final_strain, steps)
            .iter()
            .enumerate()
        {
            flags[i] |= scaler.is_extrapolation(row);
            let scaled = scaler.scale_input(row);
            let mut dst = x.row_mut(t * batch + i);
            for c in 0..N_INPUTS {
                dst[c] = scaled[c];
            }
        }
    }
    let (y, _) = model.forward_batch(x.view(), steps, batch)?;
    let grid = strain_grid(final_strain, steps);
    Ok((0..batch)
        .map(|i| Prediction {
            strain: grid.clone(),
            outputs: unpack::<N_OUTPUTS>(&y, steps, batch, i)
                .iter()
                .map(|r| scaler.unscale_output(r))
                .collect(),
            extrapolated: flags[i],
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::Architecture;
    use approx::assert_relative_eq;

    fn setup() -> (SurrogateModel, ScalerParams, DesignParams) {
        let m = SurrogateModel::init(&Architecture::desk(8, 4), 5).unwrap();
        let mut sc = ScalerParams::identity();
        sc.output_mean = [1e6, 2.0, 3.0, 4.0];
        sc.output_std = [5e7, 1.5, 0.5, 10.0];
        sc.input_min = [3.0, 1.0, 1.0, 0.0, 0.01, 0.0, 0.0, 0.45];
        sc.input_max = [6.0, 8.0, 8.0, 6.3, 0.1, 1.0, 0.25, 90.9];
        (m, sc, DesignParams::new(4, 3, 2, 0.4, 0.05).unwrap())
    }

    #[test]
    fn outputs_are_inverse_scaled_forward_pass() {
        let (m, sc, d) = setup();
        let p = predict(&m, &sc, &d, 9.1, 0.25).unwrap();
        let rows: Vec<Vec<f64>> = design_inputs(&d, 9.1, 0.25, SEQ_LEN)
            .iter()
            .map(|r| sc.scale_input(r).to_vec())
            .collect();
        let raw = m.forward(&rows).unwrap();
        for (t, r) in raw.iter().enumerate() {
            let arr: [f64; 4] = r.clone().try_into().unwrap();
            let back = sc.scale_output(&p.outputs[t]);
            for c in 0..4 {
                assert_relative_eq!(back[c], arr[c], max_relative = 1e-12, epsilon = 1e-12);
            }
        }
        assert!(!p.extrapolated);
        assert_eq!(p.strain.len(), SEQ_LEN);
    }

    #[test]
    fn identical_queries_identical_results() {
        let (m, sc, d) = setup();
        let ps = predict_many(&m, &sc, &[(d, 9.1), (d, 9.1)], 0.25).unwrap();
        assert_eq!(ps[0], ps[1]);
        assert_eq!(
            predict(&m, &sc, &d, 9.1, 0.25).unwrap().outputs,
            ps[0].outputs
        );
    }

    #[test]
    fn out_of_range_rate_flagged() {
        let (m, sc, d) = setup();
        assert!(predict(&m, &sc, &d, 500.0, 0.25).unwrap().extrapolated);
    }
}
