//! Single-loss and multi-loss response classifiers.
//!
//! The single-loss network scores the concatenation of the active features
//! and the response with one MLP and a logistic head. The multi-loss network
//! runs one MLP per feature over `[feature; response]`, each with its own
//! head, then an aggregate MLP over the concatenated subnet outputs with a
//! final head. Training minimizes the sum of every head's cross-entropy;
//! ranking uses the final head only.

mod mlp;
mod network;
mod params;

pub use mlp::{Dense, Mlp, MlpCache};
pub use network::{
    sigmoid, Arch, FeatureDims, FeatureSet, Forward, ForwardCache, Head, HeadKind, ModelConfig, MultiLoss, Network,
    SingleLoss, Subnet,
};
pub use params::{bce, head_losses, loss, GradientSet, ModelParams, LOSS_EPS};
