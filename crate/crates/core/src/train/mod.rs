//! Per-example SGD with plateau stopping, a lock-free multi-worker variant,
//! and adaptation of a vector for a user outside the population.

mod adapt;
mod hogwild;
mod report;
mod sgd;

use serde::{Deserialize, Serialize};

pub use adapt::{adapt_new_user, mean_score_with_author, AdaptConfig, Adaptation};
pub use report::{evaluate_dev, per_feature_losses, CheckpointRecord, DevEvaluation, StopReason, TrainReport};

use crate::embed::EncodedExample;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};

/// Stop when the best dev accuracy of the last `window` evaluations is not
/// at least `min_gain` above the best accuracy seen before them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub window: usize,
    pub min_gain: f64,
}

impl Default for Plateau {
    fn default() -> Self {
        Plateau {
            window: 5,
            min_gain: 0.001,
        }
    }
}

impl Plateau {
    pub fn should_stop(&self, accuracies: &[f64]) -> bool {
        if accuracies.len() <= self.window {
            return false;
        }
        let (earlier, recent) = accuracies.split_at(accuracies.len() - self.window);
        let best = |s: &[f64]| s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        best(recent) < best(earlier) + self.min_gain
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub model: ModelConfig,
    pub workers: usize,
    pub seed: u64,
    /// Training examples between dev evaluations.
    pub eval_every: usize,
    pub plateau: Plateau,
    /// Passes over the training set; training may stop earlier on plateau.
    pub epochs: usize,
    /// Multi-worker mode: examples between pushes of a worker's dense
    /// parameter updates to shared storage.
    pub sync_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.03,
            model: ModelConfig::default(),
            workers: 1,
            seed: 0,
            eval_every: 2000,
            plateau: Plateau::default(),
            epochs: 1,
            sync_every: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.workers == 0 {
            return Err(Error::config("workers must be at least 1"));
        }
        if self.plateau.window < 2 {
            return Err(Error::config("plateau window must be at least 2"));
        }
        if self.plateau.min_gain.is_nan() || self.plateau.min_gain < 0.0 {
            return Err(Error::config("plateau gain must be non-negative"));
        }
        if self.eval_every == 0 || self.epochs == 0 || self.sync_every == 0 {
            return Err(Error::config("eval_every, epochs and sync_every must be at least 1"));
        }
        self.model.validate()
    }
}

/// Row counts of the n-gram and user embedding tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableSizes {
    pub ngrams: usize,
    pub users: usize,
}

/// Called with the evaluated model after every dev checkpoint.
pub type Monitor<'a> = dyn FnMut(&ModelParams, &CheckpointRecord) -> Result<()> + 'a;

pub fn train(
    train: &[EncodedExample],
    dev: &[EncodedExample],
    sizes: TableSizes,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainReport)> {
    train_with_monitor(train, dev, sizes, cfg, &mut |_, _| Ok(()))
}

pub fn train_with_monitor(
    train: &[EncodedExample],
    dev: &[EncodedExample],
    sizes: TableSizes,
    cfg: &TrainConfig,
    monitor: &mut Monitor<'_>,
) -> Result<(ModelParams, TrainReport)> {
    cfg.validate()?;
    let model = ModelParams::init(cfg.model.clone(), sizes.ngrams, sizes.users, cfg.seed)?;
    train_from(model, train, dev, cfg, monitor)
}

/// Trains starting from `model`; `cfg.model` is ignored.
pub fn train_from(
    model: ModelParams,
    train: &[EncodedExample],
    dev: &[EncodedExample],
    cfg: &TrainConfig,
    monitor: &mut Monitor<'_>,
) -> Result<(ModelParams, TrainReport)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if dev.is_empty() {
        return Err(Error::Empty("dev set"));
    }
    if cfg.workers > 1 {
        hogwild::run(model, train, dev, cfg, monitor)
    } else {
        sgd::run(model, train, dev, cfg, monitor)
    }
}

/// Alias for [`train`] with `cfg.workers > 1`; with one worker it is the
/// deterministic trainer.
pub fn train_async(
    train: &[EncodedExample],
    dev: &[EncodedExample],
    sizes: TableSizes,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainReport)> {
    self::train(train, dev, sizes, cfg)
}

pub(crate) fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(crate::hash::derive_seed(
        seed,
        &[b"shuffle", &(epoch as u64).to_le_bytes()],
    ));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

pub(crate) fn non_finite_loss(seen: u64, lr: f64) -> Error {
    Error::NonFinite(format!(
        "training loss became non-finite after {seen} examples; the learning rate {lr} is probably too high"
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_rule() {
        let p = Plateau {
            window: 3,
            min_gain: 0.01,
        };
        assert!(!p.should_stop(&[0.5, 0.5, 0.5]));
        assert!(p.should_stop(&[0.6, 0.5, 0.6, 0.605]));
        assert!(!p.should_stop(&[0.6, 0.5, 0.6, 0.61]));
        assert!(!p.should_stop(&[0.1, 0.2, 0.3, 0.4, 0.5]));
    }

    #[test]
    fn config_validation() {
        TrainConfig::default().validate().unwrap();
        assert_eq!(TrainConfig::default().lr, 0.03);
        for bad in [
            TrainConfig {
                lr: 0.0,
                ..Default::default()
            },
            TrainConfig {
                workers: 0,
                ..Default::default()
            },
            TrainConfig {
                plateau: Plateau {
                    window: 1,
                    min_gain: 0.0,
                },
                ..Default::default()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn shuffles_are_seeded() {
        assert_eq!(epoch_order(50, 1, 0), epoch_order(50, 1, 0));
        assert_ne!(epoch_order(50, 1, 0), epoch_order(50, 1, 1));
        let mut o = epoch_order(50, 2, 0);
        o.sort();
        assert_eq!(o, (0..50).collect::<Vec<_>>());
    }
}
