//! Shared fixtures for the benchmarks.

use oasis_core::harness::{generate_synthetic_pool, SyntheticSpec};
use oasis_core::{Pool, SamplerConfig};

/// Imbalanced synthetic pool with `n` pairs and one match per 200.
pub fn pool(n: usize) -> Pool {
    let spec = SyntheticSpec { n, matches: (n / 200).max(1), seed: 7, ..SyntheticSpec::default() };
    generate_synthetic_pool(&spec).expect("valid synthetic spec")
}

pub fn config(iterations: usize) -> SamplerConfig {
    SamplerConfig { iterations, desired_strata: 30, ..SamplerConfig::default() }
}
