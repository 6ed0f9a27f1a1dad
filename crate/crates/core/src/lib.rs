//! Conversational response ranking: corpus extraction from comment trees,
//! bag-of-ngram and user embeddings, single- and multi-loss rankers, SGD
//! training and Precision@1 evaluation.

pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod format;
pub mod hash;
pub mod model;
pub mod pipeline;
pub mod synth;
pub mod train;
pub mod vocab;

pub use error::{Error, Result};
