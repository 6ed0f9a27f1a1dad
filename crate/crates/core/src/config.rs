//! Run configuration: every tunable of the pipeline as one flat TOML table.
//!
//! Missing keys take the defaults below; unknown keys are rejected.
//!
//! ```toml
//! work_dir = "work"          # where every stage reads and writes
//! strict = false             # abort on the first malformed dump line
//! unigrams = 5000            # K1
//! bigrams = 5000             # K2
//! users = 1000               # P
//! max_post_size = 1000
//! max_context = 25           # m
//! neg_per_pos = 1
//! train_ratio = 0.9
//! dev_ratio = 0.05
//! test_ratio = 0.05
//! arch = "multi"             # or "single"
//! features = "all"           # e.g. "message+author"
//! ngram_dim = 16             # d
//! user_dim = 16
//! hidden = [32, 16, 8]
//! lr = 0.03
//! workers = 1
//! epochs = 1
//! eval_every = 2000
//! plateau_window = 5
//! plateau_min_gain = 0.001
//! sync_every = 32
//! pool_size = 10             # N
//! pool_count = 10000
//! adapt_steps = 200
//! adapt_lr = 0.03
//! seed = 0
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{ExtractConfig, SplitRatios};
use crate::error::{Error, Result};
use crate::hash::derive_seed;
use crate::model::{Arch, FeatureSet, ModelConfig};
use crate::pipeline::VocabConfig;
use crate::train::{AdaptConfig, Plateau, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub work_dir: PathBuf,
    pub strict: bool,
    pub unigrams: usize,
    pub bigrams: usize,
    pub users: usize,
    pub max_post_size: usize,
    pub max_context: usize,
    pub neg_per_pos: usize,
    pub train_ratio: f64,
    pub dev_ratio: f64,
    pub test_ratio: f64,
    pub arch: Arch,
    pub features: FeatureSet,
    pub ngram_dim: usize,
    pub user_dim: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub workers: usize,
    pub epochs: usize,
    pub eval_every: usize,
    pub plateau_window: usize,
    pub plateau_min_gain: f64,
    pub sync_every: usize,
    pub pool_size: usize,
    pub pool_count: usize,
    pub adapt_steps: usize,
    pub adapt_lr: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let vocab = VocabConfig::default();
        let extract = ExtractConfig::default();
        let ratios = SplitRatios::default();
        let train = TrainConfig::default();
        let adapt = AdaptConfig::default();
        RunConfig {
            work_dir: PathBuf::from("work"),
            strict: false,
            unigrams: vocab.unigrams,
            bigrams: vocab.bigrams,
            users: vocab.users,
            max_post_size: extract.max_post_size,
            max_context: extract.max_context,
            neg_per_pos: extract.neg_per_pos,
            train_ratio: ratios.train,
            dev_ratio: ratios.dev,
            test_ratio: ratios.test,
            arch: train.model.arch,
            features: train.model.features,
            ngram_dim: train.model.ngram_dim,
            user_dim: train.model.user_dim,
            hidden: train.model.hidden,
            lr: train.lr,
            workers: train.workers,
            epochs: train.epochs,
            eval_every: train.eval_every,
            plateau_window: train.plateau.window,
            plateau_min_gain: train.plateau.min_gain,
            sync_every: train.sync_every,
            pool_size: 10,
            pool_count: 10_000,
            adapt_steps: adapt.steps,
            adapt_lr: adapt.lr,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config is always serializable")
    }

    pub fn vocab(&self) -> VocabConfig {
        VocabConfig {
            unigrams: self.unigrams,
            bigrams: self.bigrams,
            users: self.users,
        }
    }

    /// Negative sampling is seeded from the run seed.
    pub fn extract(&self) -> ExtractConfig {
        ExtractConfig {
            max_context: self.max_context,
            max_post_size: self.max_post_size,
            neg_per_pos: self.neg_per_pos,
            seed: derive_seed(self.seed, &[b"negatives"]),
        }
    }

    pub fn ratios(&self) -> SplitRatios {
        SplitRatios {
            train: self.train_ratio,
            dev: self.dev_ratio,
            test: self.test_ratio,
        }
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            arch: self.arch,
            features: self.features,
            ngram_dim: self.ngram_dim,
            user_dim: self.user_dim,
            hidden: self.hidden.clone(),
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            model: self.model(),
            workers: self.workers,
            seed: derive_seed(self.seed, &[b"train"]),
            eval_every: self.eval_every,
            plateau: Plateau {
                window: self.plateau_window,
                min_gain: self.plateau_min_gain,
            },
            epochs: self.epochs,
            sync_every: self.sync_every,
        }
    }

    pub fn pool_seed(&self) -> u64 {
        derive_seed(self.seed, &[b"pools"])
    }

    pub fn adapt(&self) -> AdaptConfig {
        AdaptConfig {
            steps: self.adapt_steps,
            lr: self.adapt_lr,
            seed: derive_seed(self.seed, &[b"adapt"]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.extract().validate()?;
        self.ratios().validate()?;
        self.train().validate()?;
        if self.pool_size == 0 || self.pool_count == 0 {
            return Err(Error::config("pool_size and pool_count must be at least 1"));
        }
        if self.adapt_steps == 0 || !(self.adapt_lr > 0.0 && self.adapt_lr.is_finite()) {
            return Err(Error::config("adapt_steps and adapt_lr must be positive"));
        }
        Ok(())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.work_dir.join(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
        c.validate().unwrap();
        assert_eq!(c.lr, 0.03);
        assert_eq!(c.hidden, vec![32, 16, 8]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml("learning_rate = 0.1").unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn parses_every_kind_of_value() {
        let c = RunConfig::from_toml(
            "arch = \"single\"\nfeatures = \"message+author\"\nhidden = [8, 4]\nlr = 0.01\nwork_dir = \"/tmp/x\"",
        )
        .unwrap();
        assert_eq!(c.arch, Arch::Single);
        assert_eq!(c.features.to_string(), "message+author");
        assert_eq!(c.hidden, vec![8, 4]);
        assert_eq!(c.work_dir, PathBuf::from("/tmp/x"));
    }

    #[test]
    fn toml_round_trip() {
        let c = RunConfig {
            max_context: 3,
            ..Default::default()
        };
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn documented_defaults_match() {
        let doc = include_str!("config.rs");
        let block: String = doc
            .lines()
            .skip_while(|l| !l.starts_with("//! ```toml"))
            .skip(1)
            .take_while(|l| !l.starts_with("//! ```"))
            .map(|l| {
                l.trim_start_matches("//!")
                    .split('#')
                    .next()
                    .unwrap()
                    .trim()
                    .to_string()
                    + "\n"
            })
            .collect();
        assert_eq!(RunConfig::from_toml(&block).unwrap(), RunConfig::default());
    }
}
