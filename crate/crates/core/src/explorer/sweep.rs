use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{pearson, sea, SweepGrid};
use crate::dataset::{ScalerParams, STRESS};
use crate::error::{Error, Result};
use crate::fesolver::MaterialModel;
use crate::geometry::{build_design, DesignParams};
use crate::surrogate::{predict_many, SurrogateModel};

/// One row of the structure–property map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub design_index: usize,
    pub params: DesignParams,
    pub rate: f64,
    /// Predicted SEA, J/kg; absent for invalid geometries.
    pub sea: Option<f64>,
    pub valid: bool,
    /// Some surrogate input fell outside the training range.
    #[serde(default)]
    pub extrapolated: bool,
}

/// Designs per work item. Each item is one batched forward pass.
const CHUNK: usize = 256;

/// Predicts SEA for every grid point and rate. Records are ordered by design
/// index, then by the grid's rate order, independent of the thread count.
pub fn sweep(
    model: &SurrogateModel,
    scaler: &ScalerParams,
    grid: &SweepGrid,
    mat: &MaterialModel,
) -> Result<Vec<SweepRecord>> {
    grid.validate()?;
    let indices = grid.indices();
    let chunks: Vec<Result<Vec<SweepRecord>>> = indices
        .par_chunks(CHUNK)
        .map(|chunk| sweep_chunk(model, scaler, grid, mat, chunk))
        .collect();
    let mut out = Vec::with_capacity(indices.len() * grid.rates.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

fn sweep_chunk(
    model: &SurrogateModel,
    scaler: &ScalerParams,
    grid: &SweepGrid,
    mat: &MaterialModel,
    chunk: &[usize],
) -> Result<Vec<SweepRecord>> {
    let mut designs = Vec::with_capacity(chunk.len());
    let mut queries = Vec::new();
    for &i in chunk {
        let p = grid.params_at(i)?;
        let valid = build_design(&p)?.is_ok();
        if valid {
            queries.extend(grid.rates.iter().map(|&r| (p, r)));
        }
        designs.push((i, p, valid));
    }
    let preds = predict_many(model, scaler, &queries, grid.final_strain)?;
    let mut preds = preds.into_iter();
    let mut out = Vec::with_capacity(chunk.len() * grid.rates.len());
    for (i, p, valid) in designs {
        for &rate in &grid.rates {
            let (sea_v, extrapolated) = if valid {
                let pr = preds.next().expect("one prediction per valid query");
                let stress: Vec<f64> = pr.outputs.iter().map(|r| r[STRESS]).collect();
                // a negative predicted area is model noise around zero
                (
                    Some(sea(&pr.strain, &stress, &p, mat.rho)?.max(0.0)),
                    pr.extrapolated,
                )
            } else {
                (None, false)
            };
            out.push(SweepRecord {
                design_index: i,
                params: p,
                rate,
                sea: sea_v,
                valid,
                extrapolated,
            });
        }
    }
    Ok(out)
}

/// Pearson r between SEA and each design parameter at one rate; `None`
/// where the parameter is constant over the valid records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCorrelation {
    pub rate: f64,
    pub n_valid: usize,
    pub sides: Option<f64>,
    pub nx: Option<f64>,
    pub ny: Option<f64>,
    pub angle: Option<f64>,
    pub vf: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub per_rate: Vec<RateCorrelation>,
}

impl CorrelationReport {
    pub fn at(&self, rate: f64) -> Option<&RateCorrelation> {
        self.per_rate.iter().find(|c| c.rate == rate)
    }

    /// CSV with one row per rate.
    pub fn to_csv(&self) -> String {
        let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let mut s = String::from("rate_per_s,n_valid,r_sides,r_nx,r_ny,r_angle,r_vf\n");
        for c in &self.per_rate {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                c.rate,
                c.n_valid,
                f(c.sides),
                f(c.nx),
                f(c.ny),
                f(c.angle),
                f(c.vf)
            ));
        }
        s
    }
}

pub fn correlations(records: &[SweepRecord], rates: &[f64]) -> Result<CorrelationReport> {
    let mut per_rate = Vec::new();
    for &rate in rates {
        let rows: Vec<&SweepRecord> = records
            .iter()
            .filter(|r| r.rate == rate && r.sea.is_some())
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| r.sea.unwrap()).collect();
        let r_of = |f: &dyn Fn(&DesignParams) -> f64| -> Result<Option<f64>> {
            let x: Vec<f64> = rows.iter().map(|r| f(&r.params)).collect();
            match pearson(&x, &y) {
                Ok(v) => Ok(Some(v)),
                Err(Error::UndefinedCorrelation) => Ok(None),
                Err(Error::InvalidArgument(_)) if rows.len() < 2 => Ok(None),
                Err(e) => Err(e),
            }
        };
        per_rate.push(RateCorrelation {
            rate,
            n_valid: rows.len(),
            sides: r_of(&|p| p.sides as f64)?,
            nx: r_of(&|p| p.nx as f64)?,
            ny: r_of(&|p| p.ny as f64)?,
            angle: r_of(&|p| p.angle)?,
            vf: r_of(&|p| p.vf)?,
        });
    }
    Ok(CorrelationReport { per_rate })
}
