//! Shared fixtures for the criterion benches.

use batchts_core::{EnvironmentSpec, MeanSpec};

/// Bernoulli instance with one arm at 0.75 and the rest at 0.5.
pub fn bernoulli_instance(arms: usize) -> EnvironmentSpec {
    EnvironmentSpec::Bernoulli(MeanSpec::gap(arms, 0.75, 0.5))
}

/// Unit-variance Gaussian instance with gap 0.2.
pub fn gaussian_instance(arms: usize) -> EnvironmentSpec {
    EnvironmentSpec::Gaussian(MeanSpec::gap(arms, 1.0, 0.8))
}
