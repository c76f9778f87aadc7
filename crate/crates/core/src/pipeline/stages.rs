use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::campaign::RUNS_FILE;
use super::PipelineConfig;
use crate::dataset::{
    build_dataset, Dataset, Partition, RunRecord, SampleTensor, ScalerParams, N_INPUTS, N_OUTPUTS,
    STRESS,
};
use crate::error::{Error, Result};
use crate::explorer::{
    angle_periodicity, best_worst, correlations, emit_maps, pearson, sea, sweep, validate_extremes,
    CorrelationReport, Periodicity, SweepRecord, ValidationRow,
};
use crate::io;
use crate::surrogate::{
    checkpoint, evaluate, pack, train_with, unpack, write_history, Architecture, EpochStats,
    SurrogateModel,
};

pub const SUMMARY_FILE: &str = "summary.json";

/// The first `n_runs` campaign runs by id. A campaign extended beyond the
/// configured count keeps its extra runs on disk but they are not used.
pub fn load_runs(cfg: &PipelineConfig) -> Result<Vec<RunRecord>> {
    let path = cfg.campaign_dir().join(RUNS_FILE);
    if !path.exists() {
        return Err(Error::MissingArtifact {
            what: "campaign runs",
            path,
        });
    }
    let mut runs: Vec<RunRecord> = io::read_jsonl(&path)?;
    runs.sort_by_key(|r| r.id);
    runs.truncate(cfg.campaign.n_runs);
    Ok(runs)
}

fn load_model(cfg: &PipelineConfig) -> Result<(SurrogateModel, ScalerParams)> {
    let path = cfg.checkpoint_path();
    let (model, scaler) = checkpoint::load(&path)?;
    let scaler =
        scaler.ok_or_else(|| Error::Checkpoint(format!("{} carries no scaler", path.display())))?;
    Ok((model, scaler))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub config_hash: String,
    pub seed: u64,
    pub n_runs: usize,
    pub n_samples: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub n_params: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    /// Scaled MAE of the retained (best-validation) parameters.
    pub train_mae: f64,
    pub val_mae: f64,
    pub test_mae: f64,
    pub wall_s: f64,
}

/// Builds the dataset from the campaign, trains the surrogate and writes the
/// checkpoint (with the scaler), the history and a summary.
pub fn train_stage(
    cfg: &PipelineConfig,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainSummary> {
    cfg.validate()?;
    let start = Instant::now();
    let hash = cfg.config_hash()?;
    let runs = load_runs(cfg)?;
    let mut dataset = build_dataset(&runs, &cfg.augment, cfg.seed)?;
    dataset.manifest.config_hash = Some(hash.clone());
    dataset.save(&cfg.dataset_dir())?;

    let train_set = dataset.scaled(Partition::Train);
    let val_set = dataset.scaled(Partition::Validation);
    let test_set = dataset.scaled(Partition::Test);
    let arch = Architecture {
        n_inputs: N_INPUTS,
        hidden: cfg.model.hidden.clone(),
        n_outputs: N_OUTPUTS,
    };
    let mut model = SurrogateModel::init(&arch, cfg.train.seed)?;
    log::info!(
        "training {} parameters on {} / {} / {} samples",
        model.n_params(),
        train_set.len(),
        val_set.len(),
        test_set.len()
    );
    let out = train_with(&mut model, &train_set, &val_set, &cfg.train, on_epoch)?;
    let model_dir = cfg.model_dir();
    write_history(&model_dir.join("history.csv"), &out.history)?;
    if let Some(reason) = out.aborted {
        return Err(Error::TrainingAborted(reason));
    }
    checkpoint::save(
        &cfg.checkpoint_path(),
        &out.model,
        Some(&dataset.manifest.scaler),
    )?;
    let chunk = cfg.train.batch_size;
    let summary = TrainSummary {
        config_hash: hash,
        seed: cfg.seed,
        n_runs: runs.len(),
        n_samples: dataset.samples.len(),
        n_train: train_set.len(),
        n_val: val_set.len(),
        n_test: test_set.len(),
        n_params: out.model.n_params(),
        epochs_run: out.history.len(),
        best_epoch: out.best_epoch,
        train_mae: evaluate(&out.model, &train_set, chunk)?,
        val_mae: evaluate(&out.model, &val_set, chunk)?,
        test_mae: evaluate(&out.model, &test_set, chunk)?,
        wall_s: start.elapsed().as_secs_f64(),
    };
    io::write_json(&model_dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub config_hash: String,
    pub rates: Vec<f64>,
    pub final_strain: f64,
    pub n_records: usize,
    pub n_valid: usize,
    pub n_extrapolated: usize,
    pub wall_s: f64,
    pub predictions_per_s: f64,
    /// Best then worst record for each rate.
    pub extremes: Vec<SweepRecord>,
    pub correlations: CorrelationReport,
    pub periodicity: Option<Periodicity>,
}

/// Sweeps the grid with the trained model and writes the maps, the
/// correlation table and a summary. Returns the summary and all records.
pub fn sweep_stage(cfg: &PipelineConfig) -> Result<(SweepSummary, Vec<SweepRecord>)> {
    cfg.validate()?;
    let (model, scaler) = load_model(cfg)?;
    let grid = &cfg.sweep;
    let start = Instant::now();
    let records = sweep(&model, &scaler, grid, &cfg.material)?;
    let wall_s = start.elapsed().as_secs_f64();
    let n_valid = records.iter().filter(|r| r.valid).count();

    let dir = cfg.sweep_dir();
    emit_maps(&dir, &records, &grid.rates)?;
    let corr = correlations(&records, &grid.rates)?;
    fs::write(dir.join("correlations.csv"), corr.to_csv())?;
    let mut extremes = Vec::new();
    for &rate in &grid.rates {
        if let Ok((b, w)) = best_worst(&records, rate) {
            extremes.push(b);
            extremes.push(w);
        }
    }
    let summary = SweepSummary {
        config_hash: cfg.config_hash()?,
        rates: grid.rates.clone(),
        final_strain: grid.final_strain,
        n_records: records.len(),
        n_valid,
        n_extrapolated: records.iter().filter(|r| r.extrapolated).count(),
        wall_s,
        predictions_per_s: n_valid as f64 / wall_s.max(1e-9),
        extremes,
        correlations: corr,
        periodicity: angle_periodicity(&records, grid),
    };
    io::write_json(&dir.join(SUMMARY_FILE), &summary)?;
    Ok((summary, records))
}

fn read_summary<T: serde::de::DeserializeOwned>(dir: &Path, what: &'static str) -> Result<T> {
    let path = dir.join(SUMMARY_FILE);
    if !path.exists() {
        return Err(Error::MissingArtifact { what, path });
    }
    io::read_json(&path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleError {
    pub parent: usize,
    pub child: usize,
    pub scaled_mae: f64,
    pub sea_true: f64,
    pub sea_pred: f64,
    pub sea_rel_err: f64,
}

/// Pearson r between a test-sample error measure and each input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCorrelation {
    pub sides: Option<f64>,
    pub nx: Option<f64>,
    pub ny: Option<f64>,
    pub angle: Option<f64>,
    pub vf: Option<f64>,
    pub rate: Option<f64>,
    pub final_strain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub config_hash: String,
    pub n_test: usize,
    pub test_mae_scaled: f64,
    pub sea_rel_err_mean: f64,
    pub sea_rel_err_median: f64,
    pub sea_rel_err_p90: f64,
    pub scaled_mae_vs_inputs: ErrorCorrelation,
    /// Square-tubule quarter-turn mismatch from the sweep, when available.
    pub periodicity: Option<Periodicity>,
    /// Quarter-turn mismatch within twice the mean test SEA error.
    pub periodic_within_band: Option<bool>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (i, f) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - f) + sorted[i + 1] * f
    } else {
        sorted[i]
    }
}

/// Per-sample surrogate error on the held-out partition, with SEA computed
/// from the true and predicted stress curves.
pub fn test_errors(
    model: &SurrogateModel,
    dataset: &Dataset,
    rho: f64,
    chunk: usize,
) -> Result<Vec<(SampleTensor, SampleError)>> {
    let scaler = &dataset.manifest.scaler;
    let raw: Vec<&SampleTensor> = dataset.partition(Partition::Test).collect();
    let mut out = Vec::with_capacity(raw.len());
    for part in raw.chunks(chunk.max(1)) {
        let scaled: Vec<SampleTensor> = part.iter().map(|s| scaler.apply(s)).collect();
        let xs: Vec<&[[f64; N_INPUTS]]> = scaled.iter().map(|s| s.inputs.as_slice()).collect();
        let (x, steps) = pack(&xs)?;
        let (y, _) = model.forward_batch(x.view(), steps, part.len())?;
        for (i, s) in part.iter().enumerate() {
            let pred_scaled = unpack::<N_OUTPUTS>(&y, steps, part.len(), i);
            let n = (steps * N_OUTPUTS) as f64;
            let scaled_mae = pred_scaled
                .iter()
                .zip(&scaled[i].outputs)
                .flat_map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b).abs()))
                .sum::<f64>()
                / n;
            let pred_stress: Vec<f64> = pred_scaled
                .iter()
                .map(|r| scaler.unscale_output(r)[STRESS])
                .collect();
            let design = s.design()?;
            let strain = s.strain();
            let sea_true = sea(&strain, &s.output_channel(STRESS), &design, rho)?;
            let sea_pred = sea(&strain, &pred_stress, &design, rho)?;
            let sea_rel_err = (sea_pred - sea_true).abs() / sea_true.abs().max(f64::MIN_POSITIVE);
            out.push((
                (*s).clone(),
                SampleError {
                    parent: s.parent,
                    child: s.child,
                    scaled_mae,
                    sea_true,
                    sea_pred,
                    sea_rel_err,
                },
            ));
        }
    }
    Ok(out)
}

/// Error-versus-input analysis on the test partition. Uses the sweep
/// summary, if present, to judge angle periodicity against the test error.
pub fn analyze(cfg: &PipelineConfig) -> Result<AnalysisSummary> {
    cfg.validate()?;
    let (model, _) = load_model(cfg)?;
    let dataset = Dataset::load(&cfg.dataset_dir())?;
    let rows = test_errors(&model, &dataset, cfg.material.rho, cfg.train.batch_size)?;
    if rows.is_empty() {
        return Err(Error::invalid("test partition is empty"));
    }

    let dir = cfg.analysis_dir();
    fs::create_dir_all(&dir)?;
    let mut csv = String::from(
        "parent,child,sides,nx,ny,angle_deg,vf,rate_per_s,final_strain,scaled_mae,sea_true,sea_pred,sea_rel_err\n",
    );
    for (s, e) in &rows {
        let d = s.design()?;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{:.4},{:.6},{},{:.6},{:.6e},{:.6},{:.6},{:.6e}",
            e.parent,
            e.child,
            d.sides,
            d.nx,
            d.ny,
            d.angle_deg(),
            d.vf,
            s.strain_rate(),
            s.final_strain(),
            e.scaled_mae,
            e.sea_true,
            e.sea_pred,
            e.sea_rel_err
        );
    }
    fs::write(dir.join("test_errors.csv"), csv)?;

    let errs: Vec<f64> = rows.iter().map(|(_, e)| e.scaled_mae).collect();
    let r_of = |f: &dyn Fn(&SampleTensor) -> f64| -> Option<f64> {
        let x: Vec<f64> = rows.iter().map(|(s, _)| f(s)).collect();
        pearson(&x, &errs).ok()
    };
    let input = |c: usize| move |s: &SampleTensor| s.inputs[0][c];
    let by_inputs = ErrorCorrelation {
        sides: r_of(&input(0)),
        nx: r_of(&input(1)),
        ny: r_of(&input(2)),
        angle: r_of(&input(3)),
        vf: r_of(&input(4)),
        rate: r_of(&|s: &SampleTensor| s.strain_rate()),
        final_strain: r_of(&|s: &SampleTensor| s.final_strain()),
    };

    let mut sea_err: Vec<f64> = rows.iter().map(|(_, e)| e.sea_rel_err).collect();
    sea_err.sort_by(f64::total_cmp);
    let sea_mean = sea_err.iter().sum::<f64>() / sea_err.len() as f64;
    let periodicity = match read_summary::<SweepSummary>(&cfg.sweep_dir(), "sweep summary") {
        Ok(s) => s.periodicity,
        Err(Error::MissingArtifact { .. }) => None,
        Err(e) => return Err(e),
    };
    let summary = AnalysisSummary {
        config_hash: cfg.config_hash()?,
        n_test: rows.len(),
        test_mae_scaled: errs.iter().sum::<f64>() / errs.len() as f64,
        sea_rel_err_mean: sea_mean,
        sea_rel_err_median: quantile(&sea_err, 0.5),
        sea_rel_err_p90: quantile(&sea_err, 0.9),
        scaled_mae_vs_inputs: by_inputs,
        periodic_within_band: periodicity
            .as_ref()
            .map(|p| p.mean_rel_diff <= 2.0 * sea_mean),
        periodicity,
    };
    io::write_json(&dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub config_hash: String,
    pub tolerance: f64,
    pub rows: Vec<ValidationRow>,
    pub all_pass: bool,
    pub max_rel_err: Option<f64>,
}

/// FE re-simulation of the sweep extremes. Writes the report as a JSON list
/// plus a summary.
pub fn validate_stage(cfg: &PipelineConfig) -> Result<ValidationSummary> {
    cfg.validate()?;
    let sweep: SweepSummary = read_summary(&cfg.sweep_dir(), "sweep summary")?;
    let v = &cfg.validation;
    let rates = if v.rates.is_empty() {
        sweep.rates.clone()
    } else {
        v.rates.clone()
    };
    let rows = validate_extremes(
        &sweep.extremes,
        &rates,
        sweep.final_strain,
        &cfg.material,
        v.edge,
        v.record_points,
        &cfg.solver,
        v.tolerance,
    )?;
    let dir = cfg.validation_dir();
    io::write_json(&dir.join("report.json"), &rows)?;
    let max_rel_err = rows
        .iter()
        .map(|r| r.rel_err.unwrap_or(f64::INFINITY))
        .reduce(f64::max);
    let summary = ValidationSummary {
        config_hash: cfg.config_hash()?,
        tolerance: v.tolerance,
        all_pass: rows.iter().all(|r| r.pass),
        max_rel_err,
        rows,
    };
    io::write_json(&dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::quantile;

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert!(quantile(&[], 0.5).is_nan());
    }
}
