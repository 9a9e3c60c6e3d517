//! Mini-batch SGD with momentum.

use log::info;
use serde::{Deserialize, Serialize};

use super::ModelParams;
use crate::datagen::LabeledImage;
use crate::error::{FmdError, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 32,
            epochs: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(FmdError::config("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(FmdError::config("momentum must lie in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(FmdError::config("batch_size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
    pub valid_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<EpochLog>,
}

/// Fraction of `samples` the model classifies correctly.
pub fn accuracy(params: &ModelParams, samples: &[LabeledImage]) -> Result<f64> {
    if samples.is_empty() {
        return Err(FmdError::EmptyDataset);
    }
    let mut correct = 0usize;
    for s in samples {
        if params.predict(&s.image)? == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// Trains from `ModelParams::init(cfg.seed)`. Batches are drawn from a
/// per-epoch Fisher-Yates shuffle; gradients are averaged over the batch and
/// applied as `v = momentum v - lr g; p += v`.
pub fn train(
    samples: &[LabeledImage],
    valid: Option<&[LabeledImage]>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(FmdError::EmptyDataset);
    }
    let mut params = ModelParams::init(cfg.seed);
    let mut velocity: Vec<Vec<f64>> = params
        .tensors()
        .iter()
        .map(|t| vec![0.0; t.values.len()])
        .collect();
    let mut rng = SplitMix64::derive(cfg.seed, 1);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut grad_sum: Vec<Vec<f64>> = velocity.iter().map(|v| vec![0.0; v.len()]).collect();
            let mut batch_loss = 0.0;
            for &i in batch {
                let s = &samples[i];
                let g = params.sample_gradients(&s.image, s.label)?;
                batch_loss += g.loss;
                for (acc, part) in grad_sum.iter_mut().zip(g.params.expect("param grads")) {
                    for (a, p) in acc.iter_mut().zip(part) {
                        *a += p;
                    }
                }
            }
            if !batch_loss.is_finite() {
                return Err(FmdError::Diverged {
                    epoch,
                    batch: batch_idx,
                    loss: batch_loss,
                });
            }
            loss_sum += batch_loss;
            let scale = 1.0 / batch.len() as f64;
            for ((tensor, vel), grad) in params.tensors_mut().into_iter().zip(&mut velocity).zip(&grad_sum) {
                for ((p, v), g) in tensor.values.iter_mut().zip(vel.iter_mut()).zip(grad) {
                    *v = cfg.momentum * *v - cfg.learning_rate * g * scale;
                    *p = (*p as f64 + *v) as f32;
                }
            }
            if !params.is_finite() {
                return Err(FmdError::Diverged {
                    epoch,
                    batch: batch_idx,
                    loss: f64::NAN,
                });
            }
        }
        let entry = EpochLog {
            epoch: epoch + 1,
            mean_loss: loss_sum / samples.len() as f64,
            train_accuracy: accuracy(&params, samples)?,
            valid_accuracy: valid.map(|v| accuracy(&params, v)).transpose()?,
        };
        info!(
            "epoch {:>2}: loss {:.4} train acc {:.4} valid acc {}",
            entry.epoch,
            entry.mean_loss,
            entry.train_accuracy,
            entry.valid_accuracy.map_or("-".to_string(), |a| format!("{a:.4}"))
        );
        log.push(entry);
    }
    Ok(TrainOutcome { params, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, DatasetSpec};

    fn tiny_set() -> Vec<LabeledImage> {
        generate(&DatasetSpec {
            seed: 5,
            per_class: 2,
            ..DatasetSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn zero_epochs_returns_initial_params() {
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let out = train(&tiny_set(), None, &cfg).unwrap();
        assert_eq!(out.params, ModelParams::init(cfg.seed));
        assert!(out.log.is_empty());
    }

    #[test]
    fn empty_dataset_is_rejected() {
        assert!(matches!(
            train(&[], None, &TrainConfig::default()),
            Err(FmdError::EmptyDataset)
        ));
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let data = tiny_set();
        let a = train(&data, Some(&data), &cfg).unwrap();
        let b = train(&data, Some(&data), &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.log, b.log);
        assert_eq!(a.log.len(), 2);
        assert!(a.params.is_finite());
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = TrainConfig {
            epochs: 3,
            learning_rate: 1e30,
            momentum: 0.0,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let err = train(&tiny_set(), None, &cfg).unwrap_err();
        assert!(matches!(err, FmdError::Diverged { .. }), "{err}");
    }

    #[test]
    fn bad_config_is_rejected() {
        let cfg = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&tiny_set(), None, &cfg), Err(FmdError::Config(_))));
    }
}
