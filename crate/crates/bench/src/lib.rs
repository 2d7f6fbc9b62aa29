//! Fixtures shared by the kernel benchmarks in `benches/`.

use scbf_core::noise::trajectory_rng;
use scbf_core::spectral::random_field_with_norm;
use scbf_core::{CovarianceSpec, NoiseMap, OperatorParams, SolverConfig, SpectralField, TorusGrid};

/// Solver configuration at truncation `n` with the default `r = 3` operator
/// and identity noise.
pub fn solver(n: usize, dt: f64, horizon: f64) -> SolverConfig {
    let grid = TorusGrid::new(n, 2.0).expect("valid grid");
    let q = CovarianceSpec::power_law(&grid, 1.5, 0.0).expect("valid covariance");
    let params = OperatorParams::new(1.0, 1.0, 3.0).expect("valid parameters");
    SolverConfig::new(params, q, NoiseMap::identity(&grid), dt, horizon)
}

/// Reproducible random field of unit `H` norm.
pub fn field(grid: &TorusGrid, seed: u64) -> SpectralField {
    random_field_with_norm(grid, 1.0, 1.0, &mut trajectory_rng(seed, 0))
}
