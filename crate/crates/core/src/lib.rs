//! Decoding-time toxicity mitigation.
//!
//! A base n-gram language model is steered at decoding time by either a pair
//! of kNN datastores (toxic / non-toxic) or a pair of class-conditional
//! expert models, combined as `softmax(z + alpha * (z_plus - z_minus))`.
//! The crate also carries the evaluation stack: toxicity scorers, expected
//! maximum toxicity, cross-lingual mitigation effect, fluency, diversity and
//! chrF++.

pub mod corpus;
pub mod datastore;
pub mod decoder;
pub mod error;
pub mod experts;
pub mod http;
pub mod lm;
pub mod metrics;
pub mod orchestrator;
mod pool;
pub mod rng;
pub mod scorer;
pub mod synth;

pub use error::{DetoxError, Result};
