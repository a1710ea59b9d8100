//! Linear-time graph collaborative filtering.
//!
//! Trains user/item embeddings on a bipartite interaction graph with BPR
//! loss, using an implicit personalized-PageRank layer that reuses the
//! previous iteration's output and a variance-reduced neighbor sampler, with
//! matrix factorization and LightGCN baselines. See the `ltgnn` binary for
//! the command-line interface.

pub mod cli;
pub mod dense;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod model;
pub mod propagation;
pub mod sampler;
pub mod scalar;
pub mod sparse;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
