//! Numeric foundations: deterministic RNG, Gauss-Hermite quadrature, and
//! dense symmetric linear algebra.

mod linalg;
mod quadrature;
mod rng;
mod stats;

pub use linalg::{cholesky_solve, min_eigenvalue, symmetric_eigenvalues};
pub use quadrature::{hermite_value, hermite_values, hermite_values_into, GaussHermite};
pub use rng::{derive_seed, fill_normals, mix64, normal_at, CounterRng};
pub use stats::{median, quantile, slope, wilson_interval, Z_95};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericError {
    #[error("quadrature rule needs at least one node")]
    QuadratureSize,
    #[error("Newton iteration for quadrature node {node} did not converge")]
    QuadratureConvergence { node: usize },
    #[error("matrix is not positive definite (pivot {pivot} = {value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
}
