use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{best_worst, sea, SweepRecord};
use crate::error::{Error, Result};
use crate::fesolver::{run_simulation_with, Loading, MaterialModel, SolverConfig};
use crate::geometry::{mesh_design, DesignParams};

/// FE cross-check of one extreme design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub design_index: usize,
    pub rate: f64,
    /// Absent when the simulation failed.
    pub sea_fe: Option<f64>,
    pub sea_pred: f64,
    pub rel_err: Option<f64>,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// SEA of an FE run, J/kg.
pub fn fe_sea(
    params: &DesignParams,
    rate: f64,
    final_strain: f64,
    mat: &MaterialModel,
    edge: f64,
    record_points: usize,
    solver: &SolverConfig,
) -> Result<f64> {
    let mesh = mesh_design(params, edge)?
        .map_err(|r| Error::invalid(format!("design cannot be simulated: {r}")))?;
    let loading = Loading {
        strain_rate: rate,
        final_strain,
        record_points,
    };
    let rec = run_simulation_with(&mesh, mat, &loading, solver)?;
    sea(&rec.nominal_strain, &rec.nominal_stress, params, mat.rho)
}

/// Re-simulates the best and worst predicted design at each rate: exactly
/// two rows per rate, best first. Simulation errors become failed rows.
#[allow(clippy::too_many_arguments)]
pub fn validate_extremes(
    records: &[SweepRecord],
    rates: &[f64],
    final_strain: f64,
    mat: &MaterialModel,
    edge: f64,
    record_points: usize,
    solver: &SolverConfig,
    tolerance: f64,
) -> Result<Vec<ValidationRow>> {
    let mut jobs = Vec::with_capacity(2 * rates.len());
    for &rate in rates {
        let (best, worst) = best_worst(records, rate)?;
        jobs.push(best);
        jobs.push(worst);
    }
    Ok(jobs
        .par_iter()
        .map(|r| {
            let pred = r.sea.expect("extremes are valid records");
            match fe_sea(
                &r.params,
                r.rate,
                final_strain,
                mat,
                edge,
                record_points,
                solver,
            ) {
                Ok(fe) => {
                    let rel = (pred - fe).abs() / fe.abs().max(f64::MIN_POSITIVE);
                    ValidationRow {
                        design_index: r.design_index,
                        rate: r.rate,
                        sea_fe: Some(fe),
                        sea_pred: pred,
                        rel_err: Some(rel),
                        pass: rel <= tolerance,
                        error: None,
                    }
                }
                Err(e) => {
                    log::warn!(
                        "validation run for design {} at {} 1/s failed: {e}",
                        r.design_index,
                        r.rate
                    );
                    ValidationRow {
                        design_index: r.design_index,
                        rate: r.rate,
                        sea_fe: None,
                        sea_pred: pred,
                        rel_err: None,
                        pass: false,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect())
}
