use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{FeatureDims, Forward, HeadKind, ModelConfig, Network};
use crate::corpus::Label;
use crate::embed::{featurize, init_tables, Bag, EmbeddingTable, EncodedExample, Feature, FeatureVectors, Tables};
use crate::error::{Error, Result};
use crate::hash::derive_seed;

/// Lower clamp for probabilities inside the log.
pub const LOSS_EPS: f64 = 1e-12;

/// Binary cross-entropy of one probability.
pub fn bce(p: f64, target: f64) -> f64 {
    let p = p.clamp(LOSS_EPS, 1.0 - LOSS_EPS);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

/// Per-head losses, in head order.
pub fn head_losses(probs: &[f64], label: Label) -> Vec<f64> {
    probs.iter().map(|&p| bce(p, label.target())).collect()
}

/// Sum of the per-head losses.
pub fn loss(probs: &[f64], label: Label) -> f64 {
    head_losses(probs, label).iter().sum()
}

/// Everything needed to score an example: embedding tables and network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub tables: Tables,
    pub network: Network,
}

/// Gradients of one example's loss. Embedding gradients are sparse: only
/// rows that appear in the example's bags or as its author are present.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub network: Network,
    pub ngram_rows: BTreeMap<u32, Vec<f64>>,
    pub user_rows: BTreeMap<u32, Vec<f64>>,
    /// Gradient with respect to each feature vector before scattering.
    pub features: FeatureVectors,
}

impl GradientSet {
    pub fn network_tensors(&self) -> Vec<&[f64]> {
        self.network.tensors()
    }
}

fn scatter(bag: &Bag, grad: &[f64], rows: &mut BTreeMap<u32, Vec<f64>>) {
    if bag.is_empty() {
        return;
    }
    let scale = 1.0 / bag.len() as f64;
    for &r in bag.rows() {
        let acc = rows.entry(r).or_insert_with(|| vec![0.0; grad.len()]);
        for (a, g) in acc.iter_mut().zip(grad) {
            *a += g * scale;
        }
    }
}

impl ModelParams {
    pub fn init(config: ModelConfig, ngram_rows: usize, user_rows: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let tables = init_tables(ngram_rows, user_rows, config.ngram_dim, config.user_dim, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[b"network"]));
        let network = Network::new(&config, &mut rng)?;
        Ok(ModelParams {
            config,
            tables,
            network,
        })
    }

    pub fn dims(&self) -> FeatureDims {
        FeatureDims {
            ngram: self.config.ngram_dim,
            user: self.config.user_dim,
        }
    }

    pub fn heads(&self) -> Vec<HeadKind> {
        self.network.heads()
    }

    pub fn zero_heads(&mut self) {
        self.network.zero_heads();
    }

    pub fn featurize(&self, ex: &EncodedExample) -> Result<FeatureVectors> {
        featurize(ex, &self.tables.ngram, &self.tables.user)
    }

    /// Featurize with a caller-supplied author vector in place of the
    /// table row.
    pub fn featurize_with_author(&self, ex: &EncodedExample, author: &[f64]) -> Result<FeatureVectors> {
        if author.len() != self.config.user_dim {
            return Err(Error::Dimension {
                what: "author vector",
                expected: self.config.user_dim,
                actual: author.len(),
            });
        }
        let table = &self.tables.ngram;
        Ok(FeatureVectors {
            input: ex.input.embed(table),
            context: ex.context.embed(table),
            author: author.to_vec(),
            response: ex.response.embed(table),
        })
    }

    pub fn forward(&self, fv: &FeatureVectors) -> Result<Forward> {
        self.network.forward(fv)
    }

    pub fn forward_example(&self, ex: &EncodedExample) -> Result<Forward> {
        self.forward(&self.featurize(ex)?)
    }

    /// Ranking score of the final head.
    pub fn score(&self, ex: &EncodedExample) -> Result<f64> {
        Ok(self.forward_example(ex)?.score())
    }

    /// Gradient of the summed loss, scattered onto embedding rows.
    pub fn gradients(&self, ex: &EncodedExample) -> Result<(Forward, GradientSet)> {
        let weights = vec![1.0; self.heads().len()];
        self.gradients_weighted(ex, &weights)
    }

    /// Gradient of `sum_k weights[k] * loss_k`.
    pub fn gradients_weighted(&self, ex: &EncodedExample, weights: &[f64]) -> Result<(Forward, GradientSet)> {
        let fv = self.featurize(ex)?;
        let fwd = self.forward(&fv)?;
        let (network, features) = self.network.backward(&fwd, ex.label.target(), weights, self.dims())?;
        let active = self.config.features;
        let mut ngram_rows = BTreeMap::new();
        let mut user_rows = BTreeMap::new();
        if active.contains(Feature::Input) {
            scatter(&ex.input, &features.input, &mut ngram_rows);
        }
        if active.contains(Feature::Context) {
            scatter(&ex.context, &features.context, &mut ngram_rows);
        }
        scatter(&ex.response, &features.response, &mut ngram_rows);
        if active.contains(Feature::Author) {
            user_rows.insert(ex.author, features.author.clone());
        }
        Ok((
            fwd,
            GradientSet {
                network,
                ngram_rows,
                user_rows,
                features,
            },
        ))
    }

    /// One plain SGD step: every parameter moves by `-lr * gradient`.
    pub fn apply(&mut self, grads: &GradientSet, lr: f64) {
        for (p, g) in self.network.tensors_mut().into_iter().zip(grads.network.tensors()) {
            for (x, d) in p.iter_mut().zip(g) {
                *x -= lr * d;
            }
        }
        apply_rows(&mut self.tables.ngram, &grads.ngram_rows, lr);
        apply_rows(&mut self.tables.user, &grads.user_rows, lr);
    }

    /// Every parameter, embedding tables first.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = vec![self.tables.ngram.as_slice(), self.tables.user.as_slice()];
        out.extend(self.network.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![self.tables.ngram.as_mut_slice(), self.tables.user.as_mut_slice()];
        out.extend(self.network.tensors_mut().into_iter().map(|t| t.as_mut_slice()));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// Round every parameter to the nearest f32, the on-disk precision.
    pub fn round_to_storage(&mut self) {
        for t in self.tensors_mut() {
            for x in t {
                *x = *x as f32 as f64;
            }
        }
    }
}

fn apply_rows(table: &mut EmbeddingTable, rows: &BTreeMap<u32, Vec<f64>>, lr: f64) {
    for (&r, g) in rows {
        for (x, d) in table.row_mut(r).iter_mut().zip(g) {
            *x -= lr * d;
        }
    }
}
