//! Embedding-based out-of-distribution scoring and selective generation
//! evaluation for conditional language models.
//!
//! The crate works on precomputed embedding dumps: it fits Gaussians
//! ([`gaussian_ood`]) and discriminative baselines ([`classifier_ood`]),
//! combines OOD scores with perplexity ([`combiner`]), and evaluates the
//! result ([`evaluation`]). The `selgen` binary wires these together.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attribution;
pub mod classifier_ood;
pub mod cli;
pub mod combiner;
pub mod error;
pub mod evaluation;
pub mod gaussian_ood;
pub mod linalg;
pub mod rng;
pub mod score_table;
pub mod store;
pub mod synth;
pub mod textstats;

pub use error::{Error, Result};

/// Anything that maps one embedding to a scalar OOD score (higher = more OOD).
pub trait OodScorer: Sync {
    fn dim(&self) -> usize;
    fn score(&self, x: &[f64]) -> Result<f64>;
}
