use std::io::Write;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{pack, SurrogateModel};
use crate::dataset::{SampleTensor, N_INPUTS, N_OUTPUTS};
use crate::error::{Error, Result};

/// Mean absolute error over all elements.
pub fn mae(y: &[f64], y_hat: &[f64]) -> f64 {
    assert_eq!(y.len(), y_hat.len(), "mae needs equal shapes");
    y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64
}

/// Mean squared error over all elements.
pub fn mse(y: &[f64], y_hat: &[f64]) -> f64 {
    assert_eq!(y.len(), y_hat.len(), "mse needs equal shapes");
    y.iter()
        .zip(y_hat)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / y.len() as f64
}

/// MAE of a prediction batch and its gradient w.r.t. the prediction.
/// The subgradient at a tie is zero.
pub fn mae_with_grad(y_hat: &Array2<f64>, y: &Array2<f64>) -> (f64, Array2<f64>) {
    let n = y.len() as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(y.raw_dim());
    for ((g, p), t) in grad.iter_mut().zip(y_hat.iter()).zip(y.iter()) {
        let d = p - t;
        loss += d.abs();
        *g = if d > 0.0 {
            1.0 / n
        } else if d < 0.0 {
            -1.0 / n
        } else {
            0.0
        };
    }
    (loss / n, grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Cosine decay of the learning rate to zero over the run.
    pub cosine: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            epochs: 150,
            batch_size: 600,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            cosine: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(
                "learning rate must be finite and non-negative",
            ));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.eps > 0.0)
        {
            return Err(Error::invalid(
                "Adam moments must lie in [0, 1) and eps > 0",
            ));
        }
        Ok(())
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        if self.cosine {
            0.5 * self.lr * (1.0 + (std::f64::consts::PI * epoch as f64 / self.epochs as f64).cos())
        } else {
            self.lr
        }
    }
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(model: &SurrogateModel, cfg: &TrainConfig) -> Self {
        let zeros: Vec<Vec<f64>> = model.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
        }
    }

    pub fn step(&mut self, model: &mut SurrogateModel, grad: &SurrogateModel, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (((p, g), m), v) in model
            .tensors_mut()
            .into_iter()
            .zip(grad.tensors())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            for k in 0..p.len() {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_mae: f64,
    pub val_mae: f64,
    pub wall_s: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation MAE (training MAE when there is
    /// no validation set).
    pub model: SurrogateModel,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    /// Set when training stopped on a non-finite loss.
    pub aborted: Option<String>,
}

fn batch_arrays(samples: &[&SampleTensor]) -> Result<(Array2<f64>, Array2<f64>, usize)> {
    let xs: Vec<&[[f64; N_INPUTS]]> = samples.iter().map(|s| s.inputs.as_slice()).collect();
    let ys: Vec<&[[f64; N_OUTPUTS]]> = samples.iter().map(|s| s.outputs.as_slice()).collect();
    let (x, steps) = pack(&xs)?;
    let (y, _) = pack(&ys)?;
    Ok((x, y, steps))
}

/// Loss and gradient on one batch of scaled samples.
pub fn batch_gradient(
    model: &SurrogateModel,
    samples: &[&SampleTensor],
) -> Result<(f64, SurrogateModel)> {
    let (x, y, steps) = batch_arrays(samples)?;
    let (y_hat, cache) = model.forward_batch(x.view(), steps, samples.len())?;
    let (loss, dy) = mae_with_grad(&y_hat, &y);
    Ok((loss, model.backward(&cache, &dy)))
}

/// Scaled MAE over a set, evaluated in chunks.
pub fn evaluate(model: &SurrogateModel, samples: &[SampleTensor], chunk: usize) -> Result<f64> {
    if samples.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for part in samples.chunks(chunk.max(1)) {
        let refs: Vec<&SampleTensor> = part.iter().collect();
        let (x, y, steps) = batch_arrays(&refs)?;
        let (y_hat, _) = model.forward_batch(x.view(), steps, refs.len())?;
        total += y_hat
            .iter()
            .zip(y.iter())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
        count += y.len();
    }
    Ok(total / count as f64)
}

/// Mini-batch Adam on scaled samples. Deterministic for a fixed seed.
pub fn train(
    mut model: SurrogateModel,
    train_set: &[SampleTensor],
    val_set: &[SampleTensor],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with(&mut model, train_set, val_set, cfg, |_| {})
}

/// As [`train`], calling `on_epoch` after every epoch.
pub fn train_with(
    model: &mut SurrogateModel,
    train_set: &[SampleTensor],
    val_set: &[SampleTensor],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(model, cfg);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = (f64::INFINITY, model.clone(), 0usize);
    let start = Instant::now();
    let mut aborted = None;

    'epochs: for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let lr = cfg.lr_at(epoch - 1);
        let mut weighted = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<&SampleTensor> = idx.iter().map(|&i| &train_set[i]).collect();
            let (loss, grad) = match batch_gradient(model, &batch) {
                Ok(v) => v,
                Err(e) => {
                    aborted = Some(format!("epoch {epoch}: {e}"));
                    break 'epochs;
                }
            };
            if !loss.is_finite() {
                aborted = Some(format!("epoch {epoch}: non-finite loss"));
                break 'epochs;
            }
            weighted += loss * batch.len() as f64;
            adam.step(model, &grad, lr);
            if !model.is_finite() {
                aborted = Some(format!("epoch {epoch}: parameters became non-finite"));
                break 'epochs;
            }
        }
        let train_mae = weighted / train_set.len() as f64;
        let val_mae = match evaluate(model, val_set, cfg.batch_size) {
            Ok(v) => v,
            Err(e) => {
                aborted = Some(format!("epoch {epoch}: {e}"));
                break;
            }
        };
        let score = if val_set.is_empty() {
            train_mae
        } else {
            val_mae
        };
        if score < best.0 {
            best = (score, model.clone(), epoch);
        }
        let stats = EpochStats {
            epoch,
            train_mae,
            val_mae,
            wall_s: start.elapsed().as_secs_f64(),
        };
        log::debug!("epoch {epoch}: train {train_mae:.4e} val {val_mae:.4e}");
        on_epoch(&stats);
        history.push(stats);
    }
    if let Some(reason) = &aborted {
        log::warn!("training stopped early: {reason}");
    }
    Ok(TrainOutcome {
        model: best.1,
        history,
        best_epoch: best.2,
        aborted,
    })
}

/// Writes `epoch,train_mae,val_mae,wall_s` rows.
pub fn write_history(path: &Path, history: &[EpochStats]) -> Result<()> {
    crate::io::ensure_parent(path)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "epoch,train_mae,val_mae,wall_s")?;
    for h in history {
        writeln!(f, "{},{},{},{}", h.epoch, h.train_mae, h.val_mae, h.wall_s)?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::Architecture;
    use approx::assert_relative_eq;

    #[test]
    fn loss_arithmetic() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(mae(&[1.0, 2.0], &[2.0, 4.0]), 1.5);
        assert_eq!(mse(&[1.0, 2.0], &[2.0, 4.0]), 2.5);
    }

    #[test]
    fn tie_subgradient_is_zero() {
        let y = Array2::from_shape_vec((1, 3), vec![1.0, 2.0, 3.0]).unwrap();
        let p = Array2::from_shape_vec((1, 3), vec![1.0, 2.5, 2.0]).unwrap();
        let (l, g) = mae_with_grad(&p, &y);
        assert_relative_eq!(l, 0.5);
        assert_eq!(g.as_slice().unwrap(), &[0.0, 1.0 / 3.0, -1.0 / 3.0]);
    }

    fn toy(n: usize) -> Vec<SampleTensor> {
        (0..n)
            .map(|i| {
                let a = 0.2 + 0.1 * i as f64;
                SampleTensor {
                    parent: i,
                    child: 0,
                    inputs: (0..6)
                        .map(|t| [a, 0.0, 0.0, 0.0, 0.0, 0.0, t as f64 / 5.0, 0.0])
                        .collect(),
                    outputs: (0..6).map(|t| [a * t as f64 / 5.0, a, 0.0, 0.1]).collect(),
                }
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let arch = Architecture {
            n_inputs: 8,
            hidden: vec![4],
            n_outputs: 4,
        };
        let m = SurrogateModel::init(&arch, 0).unwrap();
        let cfg = TrainConfig {
            lr: 0.0,
            epochs: 3,
            batch_size: 2,
            ..Default::default()
        };
        let out = train(m.clone(), &toy(4), &[], &cfg).unwrap();
        assert_eq!(out.model, m);
    }

    #[test]
    fn loss_drops_and_history_is_reproducible() {
        let arch = Architecture {
            n_inputs: 8,
            hidden: vec![8, 8],
            n_outputs: 4,
        };
        let cfg = TrainConfig {
            lr: 1e-2,
            epochs: 5,
            batch_size: 3,
            seed: 4,
            ..Default::default()
        };
        let data = toy(6);
        let run = || {
            train(
                SurrogateModel::init(&arch, 1).unwrap(),
                &data,
                &data[..2],
                &cfg,
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        let strip = |h: &[EpochStats]| {
            h.iter()
                .map(|s| (s.train_mae, s.val_mae))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a.history), strip(&b.history));
        assert!(a.history[4].train_mae < a.history[0].train_mae);
    }

    #[test]
    fn history_csv_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        write_history(
            &p,
            &[EpochStats {
                epoch: 1,
                train_mae: 0.5,
                val_mae: 0.25,
                wall_s: 0.1,
            }],
        )
        .unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert!(text.starts_with("epoch,train_mae,val_mae,wall_s\n1,0.5,0.25,0.1"));
    }

    #[test]
    fn bad_config_rejected() {
        assert!(TrainConfig {
            epochs: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            lr: f64::NAN,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
