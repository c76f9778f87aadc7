//! End-to-end stages: FE campaign, dataset and training, sweep, analysis and
//! FE validation. Every stage reads and writes files under one work
//! directory and stamps its outputs with the config hash.

mod campaign;
mod stages;

pub use campaign::{
    plan_run, run_campaign, CampaignManifest, CampaignSummary, ControlRun, FailedRun,
};
pub use stages::{
    analyze, load_runs, sweep_stage, test_errors, train_stage, validate_stage, AnalysisSummary,
    ErrorCorrelation, SampleError, SweepSummary, TrainSummary, ValidationSummary,
};

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::AugmentConfig;
use crate::error::{Error, Result};
use crate::explorer::SweepGrid;
use crate::fesolver::{MaterialModel, SolverConfig};
use crate::geometry::DEFAULT_EDGE;
use crate::surrogate::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    pub n_runs: usize,
    /// Log-uniform sampling range of the nominal strain rate, 1/s.
    pub rate_range: (f64, f64),
    pub final_strain: f64,
    pub record_points: usize,
    pub edge: f64,
    /// Also simulate the fully dense specimen as a solver regression run.
    pub solid_control: bool,
    /// The campaign fails when more than this fraction of runs fail.
    pub max_failure_fraction: f64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            n_runs: 200,
            rate_range: (0.45, 90.9),
            final_strain: 0.25,
            record_points: 101,
            edge: DEFAULT_EDGE,
            solid_control: true,
            max_failure_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: vec![64; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationConfig {
    /// Allowed relative SEA error of the extremes.
    pub tolerance: f64,
    /// Rates to validate; empty means every sweep rate.
    pub rates: Vec<f64>,
    pub edge: f64,
    pub record_points: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            tolerance: 0.10,
            rates: Vec::new(),
            edge: DEFAULT_EDGE,
            record_points: 101,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub workdir: PathBuf,
    /// Overrides `<workdir>/dataset`.
    pub dataset_dir: Option<PathBuf>,
    /// Overrides `<workdir>/model/checkpoint.bin`.
    pub checkpoint: Option<PathBuf>,
    /// JSON material file; replaces `material` when set.
    pub material_path: Option<PathBuf>,
    pub material: MaterialModel,
    pub seed: u64,
    /// Thread count; `None` uses the available parallelism. Not hashed.
    pub workers: Option<usize>,
    pub solver: SolverConfig,
    pub campaign: CampaignConfig,
    pub augment: AugmentConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub sweep: SweepGrid,
    pub validation: ValidationConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            workdir: PathBuf::from("runs"),
            dataset_dir: None,
            checkpoint: None,
            material_path: None,
            material: MaterialModel::default(),
            seed: 0,
            workers: None,
            solver: SolverConfig::default(),
            campaign: CampaignConfig::default(),
            augment: AugmentConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            sweep: SweepGrid::default(),
            validation: ValidationConfig::default(),
        }
    }
}

/// Subset of the config that determines individual campaign runs. The run
/// count is left out: run plans depend only on the seed and the id, so a
/// campaign can be extended in place.
#[derive(Serialize)]
struct CampaignKey<'a> {
    seed: u64,
    material: &'a MaterialModel,
    solver: &'a SolverConfig,
    rate_range: (f64, f64),
    final_strain: f64,
    record_points: usize,
    edge: f64,
}

fn sha_hex(value: &impl Serialize) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

impl PipelineConfig {
    /// Reads TOML (`.toml`) or JSON (anything else). The material file, if
    /// named, is resolved relative to the config file and loaded.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact {
                what: "config file",
                path: path.to_path_buf(),
            });
        }
        let text = fs::read_to_string(path)?;
        let mut cfg: PipelineConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text)?
        };
        if let Some(m) = &cfg.material_path {
            let resolved = match path.parent() {
                Some(dir) if m.is_relative() => dir.join(m),
                _ => m.clone(),
            };
            cfg.material_path = Some(resolved);
        }
        cfg.resolve_material()?;
        Ok(cfg)
    }

    /// Loads `material_path` into `material`, if set.
    pub fn resolve_material(&mut self) -> Result<()> {
        if let Some(p) = &self.material_path {
            if !p.exists() {
                return Err(Error::MissingArtifact {
                    what: "material file",
                    path: p.clone(),
                });
            }
            self.material = MaterialModel::from_json(&fs::read_to_string(p)?)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.material.validate()?;
        self.train.validate()?;
        self.sweep.validate()?;
        let c = &self.campaign;
        if !(c.rate_range.0 > 0.0 && c.rate_range.0 <= c.rate_range.1) {
            return Err(Error::Config(
                "campaign rate range must be positive and ordered".into(),
            ));
        }
        if c.record_points < 2 || !(c.edge > 0.0) || !(0.0..=1.0).contains(&c.max_failure_fraction)
        {
            return Err(Error::Config(
                "campaign needs record_points >= 2, edge > 0, failure fraction in [0, 1]".into(),
            ));
        }
        if self.model.hidden.is_empty() || self.model.hidden.contains(&0) {
            return Err(Error::Config(
                "model needs at least one non-empty GRU layer".into(),
            ));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    /// SHA-256 of the result-relevant settings: paths and the worker count
    /// are excluded.
    pub fn config_hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.workdir = PathBuf::new();
        c.dataset_dir = None;
        c.checkpoint = None;
        c.material_path = None;
        c.workers = None;
        sha_hex(&c)
    }

    /// Hash of the settings a finished campaign run depends on.
    pub fn campaign_hash(&self) -> Result<String> {
        sha_hex(&CampaignKey {
            seed: self.seed,
            material: &self.material,
            solver: &self.solver,
            rate_range: self.campaign.rate_range,
            final_strain: self.campaign.final_strain,
            record_points: self.campaign.record_points,
            edge: self.campaign.edge,
        })
    }

    pub fn campaign_dir(&self) -> PathBuf {
        self.workdir.join("campaign")
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.dataset_dir
            .clone()
            .unwrap_or_else(|| self.workdir.join("dataset"))
    }

    pub fn model_dir(&self) -> PathBuf {
        self.workdir.join("model")
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.model_dir().join("checkpoint.bin"))
    }

    pub fn sweep_dir(&self) -> PathBuf {
        self.workdir.join("sweep")
    }

    pub fn analysis_dir(&self) -> PathBuf {
        self.workdir.join("analysis")
    }

    pub fn validation_dir(&self) -> PathBuf {
        self.workdir.join("validation")
    }
}

/// Sets the size of the global worker pool. Only the first call in a
/// process takes effect.
pub fn init_workers(workers: Option<usize>) {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    if let Err(e) = builder.build_global() {
        log::debug!("worker pool already initialised: {e}");
    }
}
