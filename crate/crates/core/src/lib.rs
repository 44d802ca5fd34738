//! Metric-learning story engine: trains a shared-weight embedding network with
//! triplet or contrastive loss, projects per-epoch embeddings to 2D with
//! t-SNE, answers nearest-neighbor queries, reproduces two-group test-score
//! statistics and compiles everything into a six-slice story bundle.

pub mod bundle;
pub mod dataset;
pub mod error;
pub mod fingerprint;
pub mod gradcheck;
pub mod inference;
pub mod losses;
pub mod matrix;
pub mod net;
pub mod pipeline;
pub mod projection;
pub mod rng;
pub mod stats;
pub mod trainer;

pub use error::{Error, Result};
