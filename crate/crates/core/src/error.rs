use thiserror::Error;

/// Errors raised across the tomography toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FdpError {
    #[error("index {index} out of range for Fock cutoff {dim}")]
    OutOfRange { index: usize, dim: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error(
        "truncation leakage {leakage:.3e} for |alpha| = {alpha} at cutoff {dim} exceeds {tolerance:.1e}; \
         cutoff {required_dim} is required"
    )]
    Cutoff {
        alpha: f64,
        dim: usize,
        leakage: f64,
        tolerance: f64,
        required_dim: usize,
    },

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, FdpError>;
