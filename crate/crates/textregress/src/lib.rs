//! Text-to-text metric prediction over blackbox-optimization studies.
//!
//! The library serializes heterogeneous experimental-design inputs (search
//! spaces, trials, task metadata) into text, trains a compact encoder-decoder
//! language model that emits numeric predictions as custom float tokens, and
//! evaluates it against classical regressors (MLP, GP, boosted trees, random
//! forest) on a reproducible shifted-BBOB multi-task benchmark.
//!
//! Main entry points:
//! - [`study`]: the study / trial / search-space data model and JSONL format.
//! - [`taskgen`]: shifted-BBOB and synthetic conditional dataset generators.
//! - [`textio`]: prompt serialization, float tokenization, vocabularies.
//! - [`lm`]: the from-scratch transformer, training loops, checkpoints.
//! - [`decode`]: constrained sampling, aggregation, uncertainty.
//! - [`baselines`]: featurization and classical regressors.
//! - [`eval`]: study error, ranking metrics, calibration reports.
//! - [`experiments`]: end-to-end experiment suites with artifact caching.

pub mod baselines;
pub mod bbob;
pub mod cli;
pub mod decode;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod lm;
pub mod rng;
pub mod study;
pub mod taskgen;
pub mod textio;

pub use error::{Error, Result};
