use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embed::{EncodedExample, Feature};
use crate::error::{Error, Result};
use crate::hash::derive_seed;
use crate::model::ModelParams;

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptConfig {
    /// Single-example SGD steps, cycling through the history in order.
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            steps: 200,
            lr: 0.03,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adaptation {
    pub initial: Vec<f64>,
    pub vector: Vec<f64>,
    /// No history was given, so `vector` is the random initialization.
    pub empty_history: bool,
}

/// Learns an author vector for a user outside the population. The model
/// is only read: every other parameter stays frozen.
pub fn adapt_new_user(model: &ModelParams, history: &[EncodedExample], cfg: &AdaptConfig) -> Result<Adaptation> {
    if !model.config.features.contains(Feature::Author) {
        return Err(Error::config("adaptation needs a model that uses the author feature"));
    }
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(Error::config(format!("learning rate must be positive, got {}", cfg.lr)));
    }
    let dim = model.config.user_dim;
    let bound = 1.0 / (dim as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[b"new-user"]));
    let initial: Vec<f64> = (0..dim).map(|_| rng.gen_range(-bound..=bound)).collect();
    if history.is_empty() {
        log::warn!("empty history: returning the random initialization");
        return Ok(Adaptation {
            vector: initial.clone(),
            initial,
            empty_history: true,
        });
    }
    let weights = vec![1.0; model.heads().len()];
    let mut v = initial.clone();
    for ex in history.iter().cycle().take(cfg.steps) {
        let fv = model.featurize_with_author(ex, &v)?;
        let fwd = model.forward(&fv)?;
        let (_, grads) = model
            .network
            .backward(&fwd, ex.label.target(), &weights, model.dims())?;
        v.iter_mut().zip(&grads.author).for_each(|(x, g)| *x -= cfg.lr * g);
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("adapted user vector".into()));
        }
    }
    Ok(Adaptation {
        initial,
        vector: v,
        empty_history: false,
    })
}

/// Mean final-head score over `examples` with `author` as the author vector.
pub fn mean_score_with_author(model: &ModelParams, examples: &[EncodedExample], author: &[f64]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Empty("example set"));
    }
    let mut sum = 0.0;
    for ex in examples {
        sum += model.forward(&model.featurize_with_author(ex, author)?)?.score();
    }
    Ok(sum / examples.len() as f64)
}
