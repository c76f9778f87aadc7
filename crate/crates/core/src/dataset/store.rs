use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    augment, downsample, split, DatasetSplit, Partition, RunRecord, SampleTensor, ScalerParams,
    SEQ_LEN,
};
use crate::error::{Error, Result};
use crate::io;

pub const SAMPLES_FILE: &str = "samples.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Children per run.
    pub k: usize,
    pub strain_lo: f64,
    pub strain_hi: f64,
    pub seq_len: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            k: 20,
            strain_lo: 0.10,
            strain_hi: 0.25,
            seq_len: SEQ_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub augment: AugmentConfig,
    pub n_runs: usize,
    pub n_samples: usize,
    pub scaler: ScalerParams,
    pub split: DatasetSplit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// Raw (unscaled) samples with their split and training-set scaler.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<SampleTensor>,
    pub manifest: DatasetManifest,
}

/// Downsamples and augments every run, splits by run, and fits the scaler
/// on the training partition.
pub fn build_dataset(runs: &[RunRecord], cfg: &AugmentConfig, seed: u64) -> Result<Dataset> {
    let mut samples = Vec::with_capacity(runs.len() * (cfg.k + 1));
    for run in runs {
        let parent = downsample(run, cfg.seq_len)?;
        // per-run stream keeps children independent of run order
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(run.id as u64);
        let hi = cfg.strain_hi.min(parent.final_strain());
        let children = if cfg.k > 0 {
            augment(&parent, cfg.k, cfg.strain_lo, hi, &mut rng)?
        } else {
            Vec::new()
        };
        samples.push(parent);
        samples.extend(children);
    }
    let split = split(&samples, seed)?;
    let scaler = ScalerParams::fit(split.train.iter().map(|&i| &samples[i]))?;
    Ok(Dataset {
        manifest: DatasetManifest {
            seed,
            augment: cfg.clone(),
            n_runs: runs.len(),
            n_samples: samples.len(),
            scaler,
            split,
            config_hash: None,
        },
        samples,
    })
}

impl Dataset {
    pub fn partition(&self, part: Partition) -> impl Iterator<Item = &SampleTensor> + '_ {
        self.manifest
            .split
            .indices(part)
            .iter()
            .map(move |&i| &self.samples[i])
    }

    /// Scaled copies of one partition.
    pub fn scaled(&self, part: Partition) -> Vec<SampleTensor> {
        self.partition(part)
            .map(|s| self.manifest.scaler.apply(s))
            .collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        io::write_jsonl(&dir.join(SAMPLES_FILE), &self.samples)?;
        io::write_json(&dir.join(MANIFEST_FILE), &self.manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        if !manifest_path.exists() {
            return Err(Error::MissingArtifact {
                what: "dataset manifest",
                path: manifest_path,
            });
        }
        let manifest: DatasetManifest = io::read_json(&manifest_path)?;
        let samples: Vec<SampleTensor> = io::read_jsonl(&dir.join(SAMPLES_FILE))?;
        if samples.len() != manifest.n_samples {
            return Err(Error::invalid(format!(
                "dataset holds {} samples, manifest expects {}",
                samples.len(),
                manifest.n_samples
            )));
        }
        Ok(Dataset { samples, manifest })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::tests::linear_run;
    use crate::dataset::{N_INPUTS, STRAIN};

    fn runs(n: usize) -> Vec<RunRecord> {
        (0..n)
            .map(|i| {
                let mut r = linear_run(60 + i, 0.25, 0.5 + i as f64);
                r.id = i;
                r.design.vf = 0.02 + 0.001 * i as f64;
                r
            })
            .collect()
    }

    #[test]
    fn augmentation_multiplies_by_k_plus_one() {
        let ds = build_dataset(&runs(10), &AugmentConfig::default(), 5).unwrap();
        assert_eq!(ds.samples.len(), 10 * 21);
        assert_eq!(ds.manifest.split.len(), ds.samples.len());
        for s in &ds.samples {
            s.validate().unwrap();
        }
    }

    #[test]
    fn scaled_training_set_is_standardised() {
        let ds = build_dataset(&runs(12), &AugmentConfig::default(), 2).unwrap();
        let train = ds.scaled(Partition::Train);
        let rows: Vec<[f64; N_INPUTS]> = train
            .iter()
            .flat_map(|s| s.inputs.iter().copied())
            .collect();
        let n = rows.len() as f64;
        for c in [4, STRAIN, 7] {
            let mean = rows.iter().map(|r| r[c]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-9, "channel {c} mean {mean}");
            assert!(
                (var.sqrt() - 1.0).abs() < 1e-9,
                "channel {c} std {}",
                var.sqrt()
            );
        }
    }

    #[test]
    fn save_load_is_bit_identical() {
        let mut ds = build_dataset(
            &runs(5),
            &AugmentConfig {
                k: 3,
                ..Default::default()
            },
            11,
        )
        .unwrap();
        ds.manifest.config_hash = Some("abc".into());
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back, ds);
        for (a, b) in back.samples.iter().zip(&ds.samples) {
            for (ra, rb) in a.outputs.iter().zip(&b.outputs) {
                for c in 0..4 {
                    assert_eq!(ra[c].to_bits(), rb[c].to_bits());
                }
            }
        }
    }

    #[test]
    fn missing_manifest_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let err = Dataset::load(dir.path()).unwrap_err();
        assert!(err.to_string().contains("dataset manifest"), "{err}");
    }

    #[test]
    fn children_independent_of_run_order() {
        let rs = runs(6);
        let mut rev = rs.clone();
        rev.reverse();
        let cfg = AugmentConfig {
            k: 4,
            ..Default::default()
        };
        let a = build_dataset(&rs, &cfg, 3).unwrap();
        let b = build_dataset(&rev, &cfg, 3).unwrap();
        let find = |ds: &Dataset, p: usize, c: usize| {
            ds.samples
                .iter()
                .find(|s| s.parent == p && s.child == c)
                .unwrap()
                .clone()
        };
        assert_eq!(find(&a, 2, 3), find(&b, 2, 3));
    }
}
