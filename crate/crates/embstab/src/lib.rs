//! Deterministic skip-gram embeddings for click-stream sessions, plus
//! the measurement toolkit to quantify how single data points, the
//! softmax approximation (Hierarchical Softmax vs Negative Sampling)
//! and algorithmic randomness change the resulting model.
//!
//! The crate splits into:
//!
//! - [`corpus`] — session corpora, vocabularies, synthetic Zipf data;
//! - [`huffman`] — the deterministic HS tree and coding diffs;
//! - [`trainer`] — the skip-gram trainer and model file format;
//! - [`metrics`] — neighborhood overlap and density-based topology;
//! - [`stats`] — OLS with inference, correlations, summaries;
//! - [`loo`] — the leave-one-out experiment harness.

pub mod corpus;
pub mod error;
pub mod huffman;
pub mod loo;
pub mod metrics;
pub mod rng;
pub mod stats;
pub mod trainer;

pub use error::{Error, Result};
