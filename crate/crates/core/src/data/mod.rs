//! Streams of interpretations: file format, partitioning and a synthetic
//! generator.

pub mod config;
mod generator;
mod stream;

use crate::ec::Interpretation;

pub use config::{ConfigError, KeyValues};
pub use generator::{
    default_modes, generate, Generated, GeneratorConfig, GeneratorError, DEFAULT_GROUND_TRUTH, DEFAULT_MODES,
    GENERATOR_KEYS,
};
pub use stream::{parse_stream, render_stream, StreamError};

/// Splits a stream into `k` sub-streams: interpretations with positive
/// annotation are dealt round-robin, the rest continue the rotation where
/// the positives stopped. Each sub-stream keeps the input order.
pub fn partition(stream: &[Interpretation], k: usize) -> Vec<Vec<Interpretation>> {
    assert!(k >= 1, "partition needs at least one sub-stream");
    let mut owner = vec![0usize; stream.len()];
    let mut next = 0;
    for (i, interp) in stream.iter().enumerate() {
        if interp.has_positive() {
            owner[i] = next % k;
            next += 1;
        }
    }
    for (i, interp) in stream.iter().enumerate() {
        if !interp.has_positive() {
            owner[i] = next % k;
            next += 1;
        }
    }
    let mut out = vec![Vec::new(); k];
    for (i, interp) in stream.iter().enumerate() {
        out[owner[i]].push(interp.clone());
    }
    out
}
