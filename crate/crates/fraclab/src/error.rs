//! Error taxonomy shared across the crate.
//!
//! The CLI maps these onto process exit codes: configuration problems
//! exit with 2, solver and estimator failures with 3; a failed check in
//! `checks` mode exits with 1 without raising an error.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FracError {
    /// Invalid configuration or malformed input data.
    #[error("config error: {0}")]
    Config(String),
    /// Iterative solver failed to converge or factorization failed.
    #[error("solver error: {0}")]
    Solver(String),
    /// Quadrature refinement failed to stabilize.
    #[error("quadrature error: {0}")]
    Quadrature(String),
    /// Monte Carlo estimator could not produce a fit.
    #[error("estimator error: {0}")]
    Estimator(String),
    /// Filesystem problem while writing artifacts.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl FracError {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            FracError::Config(_) => 2,
            FracError::Solver(_) | FracError::Quadrature(_) | FracError::Estimator(_) => 3,
            FracError::Io(_) => 3,
        }
    }
}
