use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::fs;
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PipelineConfig;
use crate::dataset::RunRecord;
use crate::error::{Error, Result};
use crate::fesolver::{run_simulation_with, Loading, SimulationRecord};
use crate::geometry::{
    build_design, mesh_design, DesignParams, RasterMesh, COUNT_RANGE, SIDES_RANGE, VF_RANGE,
};
use crate::io;

pub const RUNS_FILE: &str = "runs.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONTROL_FILE: &str = "control.json";

/// Keeps campaign draws apart from other users of the same seed.
const STREAM_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
const MAX_DRAWS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRun {
    pub id: usize,
    pub design: DesignParams,
    pub strain_rate: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignManifest {
    pub config_hash: String,
    pub campaign_hash: String,
    pub seed: u64,
    pub n_requested: usize,
    pub n_completed: usize,
    pub failed: Vec<FailedRun>,
    pub solid_control: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub n_requested: usize,
    pub n_completed: usize,
    pub n_new: usize,
    pub n_failed: usize,
    pub wall_s: f64,
    pub config_hash: String,
}

/// The dense reference specimen, simulated once per campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRun {
    pub strain_rate: f64,
    pub max_energy_residual: f64,
    pub record: SimulationRecord,
}

/// Design and strain rate of campaign run `id`. Designs are drawn uniformly
/// over the parameter box and redrawn until the geometry is valid; the rate
/// is log-uniform. Each id has its own random stream, so plans do not depend
/// on which runs already exist.
pub fn plan_run(cfg: &PipelineConfig, id: usize) -> Result<(DesignParams, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ STREAM_SALT);
    rng.set_stream(id as u64);
    let (lo, hi) = cfg.campaign.rate_range;
    let rate = rng.random_range(lo.ln()..=hi.ln()).exp().clamp(lo, hi);
    for _ in 0..MAX_DRAWS {
        let p = DesignParams::new(
            rng.random_range(SIDES_RANGE.0..=SIDES_RANGE.1),
            rng.random_range(COUNT_RANGE.0..=COUNT_RANGE.1),
            rng.random_range(COUNT_RANGE.0..=COUNT_RANGE.1),
            rng.random_range(0.0..TAU),
            rng.random_range(VF_RANGE.0..=VF_RANGE.1),
        )?;
        if build_design(&p)?.is_ok() {
            return Ok((p, rate));
        }
    }
    Err(Error::invalid(format!(
        "no valid design after {MAX_DRAWS} draws for run {id}"
    )))
}

fn simulate(cfg: &PipelineConfig, mesh: &RasterMesh, rate: f64) -> Result<SimulationRecord> {
    let loading = Loading {
        strain_rate: rate,
        final_strain: cfg.campaign.final_strain,
        record_points: cfg.campaign.record_points,
    };
    run_simulation_with(mesh, &cfg.material, &loading, &cfg.solver)
}

fn run_one(cfg: &PipelineConfig, id: usize, p: &DesignParams, rate: f64) -> Result<RunRecord> {
    let mesh = mesh_design(p, cfg.campaign.edge)?
        .map_err(|r| Error::invalid(format!("design {p} cannot be meshed: {r}")))?;
    Ok(RunRecord {
        id,
        design: (*p).into(),
        strain_rate: rate,
        record: simulate(cfg, &mesh, rate)?,
    })
}

fn run_batch(
    cfg: &PipelineConfig,
    ids: &[usize],
    runs_path: &Path,
) -> Vec<std::result::Result<usize, FailedRun>> {
    let writer = Mutex::new(());
    ids.par_iter()
        .map(|&id| {
            let (p, rate) = plan_run(cfg, id).map_err(|e| FailedRun {
                id,
                design: DesignParams {
                    sides: 4,
                    nx: 1,
                    ny: 1,
                    angle: 0.0,
                    vf: VF_RANGE.0,
                },
                strain_rate: 0.0,
                error: e.to_string(),
            })?;
            let t = Instant::now();
            let fail = |e: Error| FailedRun {
                id,
                design: p,
                strain_rate: rate,
                error: e.to_string(),
            };
            let rec = run_one(cfg, id, &p, rate).map_err(fail)?;
            let _guard = writer.lock().unwrap_or_else(|e| e.into_inner());
            io::append_jsonl(runs_path, &rec).map_err(fail)?;
            log::info!(
                "run {id} ({p}, {rate:.3} 1/s) done in {:.1} s",
                t.elapsed().as_secs_f64()
            );
            Ok(id)
        })
        .collect()
}

/// Runs FE simulations under `<workdir>/campaign` until `n_runs` have
/// completed. A run that fails (typically a void collapsing onto itself,
/// which the solver cannot follow without contact) is recorded in the
/// manifest and replaced by the next unused id; the campaign gives up once
/// failures exceed `max_failure_fraction` of `n_runs`. Completed and failed
/// ids are skipped on later invocations, so an interrupted campaign resumes
/// where it stopped and reproduces the same set of runs.
pub fn run_campaign(cfg: &PipelineConfig) -> Result<CampaignSummary> {
    cfg.validate()?;
    let start = Instant::now();
    let dir = cfg.campaign_dir();
    fs::create_dir_all(&dir)?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let campaign_hash = cfg.campaign_hash()?;
    let mut failed: Vec<FailedRun> = Vec::new();
    if manifest_path.exists() {
        let old: CampaignManifest = io::read_json(&manifest_path)?;
        if old.campaign_hash != campaign_hash {
            return Err(Error::Config(format!(
                "{} holds a campaign made with different settings; use a fresh work directory",
                dir.display()
            )));
        }
        failed = old.failed;
    }
    let runs_path = dir.join(RUNS_FILE);
    let n = cfg.campaign.n_runs;
    let existing: Vec<RunRecord> = if runs_path.exists() {
        io::read_jsonl(&runs_path)?
    } else {
        Vec::new()
    };
    let mut done: BTreeSet<usize> = existing.iter().map(|r| r.id).collect();
    let max_failed = (cfg.campaign.max_failure_fraction * n as f64).floor() as usize;
    log::info!(
        "campaign: {} of {n} runs done, {} failed before",
        done.len().min(n),
        failed.len()
    );

    let mut n_new = 0;
    let mut next_id = 0;
    while done.len() < n && failed.len() <= max_failed {
        let skip: BTreeSet<usize> = failed.iter().map(|f| f.id).collect();
        let mut batch = Vec::new();
        while batch.len() + done.len() < n {
            if !done.contains(&next_id) && !skip.contains(&next_id) {
                batch.push(next_id);
            }
            next_id += 1;
        }
        for outcome in run_batch(cfg, &batch, &runs_path) {
            match outcome {
                Ok(id) => {
                    done.insert(id);
                    n_new += 1;
                }
                Err(f) => {
                    log::warn!("run {} failed: {}", f.id, f.error);
                    failed.push(f);
                }
            }
        }
    }
    failed.sort_by_key(|f| f.id);

    if n_new > 0 {
        // completion order depends on scheduling; store by id
        let mut all: Vec<RunRecord> = io::read_jsonl(&runs_path)?;
        all.sort_by_key(|r| r.id);
        all.dedup_by_key(|r| r.id);
        let tmp = dir.join(format!("{RUNS_FILE}.tmp"));
        io::write_jsonl(&tmp, &all)?;
        fs::rename(&tmp, &runs_path)?;
    }

    let control_path = dir.join(CONTROL_FILE);
    if cfg.campaign.solid_control && !control_path.exists() {
        let (lo, hi) = cfg.campaign.rate_range;
        let rate = (lo * hi).sqrt();
        let record = simulate(cfg, &RasterMesh::solid(cfg.campaign.edge)?, rate)?;
        let max_energy_residual = record.energy_residuals().into_iter().fold(0.0, f64::max);
        io::write_json(
            &control_path,
            &ControlRun {
                strain_rate: rate,
                max_energy_residual,
                record,
            },
        )?;
    }

    let n_completed = done.len();
    io::write_json(
        &manifest_path,
        &CampaignManifest {
            config_hash: cfg.config_hash()?,
            campaign_hash,
            seed: cfg.seed,
            n_requested: n,
            n_completed,
            failed: failed.clone(),
            solid_control: cfg.campaign.solid_control,
        },
    )?;
    if failed.len() > max_failed {
        return Err(Error::CampaignFailed {
            failed: failed.len(),
            total: n,
        });
    }
    Ok(CampaignSummary {
        n_requested: n,
        n_completed,
        n_new,
        n_failed: failed.len(),
        wall_s: start.elapsed().as_secs_f64(),
        config_hash: cfg.config_hash()?,
    })
}
