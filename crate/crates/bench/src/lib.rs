//! Fixtures shared by the benchmarks.

use ecl_core::data::{generate, GeneratorConfig};
use ecl_core::ec::Interpretation;

/// Noise-free synthetic stream with the default three entities.
pub fn stream(horizon: u64, chunk_size: usize) -> Vec<Interpretation> {
    generate(&GeneratorConfig {
        horizon,
        chunk_size,
        ..GeneratorConfig::default()
    })
    .expect("default generator config is valid")
    .stream
}
