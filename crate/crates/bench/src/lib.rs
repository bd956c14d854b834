//! Shared fixtures for the benchmarks under `benches/`.

use semipen_core::simlab::{builtin_dgp, generate};
use semipen_core::Dataset;

/// A sample of size `n` from the built-in default design.
pub fn default_sample(n: usize, seed: u64) -> Dataset {
    let spec = builtin_dgp("default").expect("default design exists").spec;
    generate(&spec, n, seed).expect("default design generates")
}
