use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("shape mismatch: {0}")]
    ShapeError(String),

    #[error("invalid band: {0}")]
    InvalidBand(String),

    #[error("epoch too short: need more than {needed} samples, got {got}")]
    EpochTooShort { needed: usize, got: usize },

    #[error("invalid lag {lag} for an epoch of {len} samples")]
    InvalidLag { lag: usize, len: usize },

    #[error("format error at byte {offset}: {reason}")]
    FormatError { offset: u64, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    ConvergenceError { iterations: usize, residual: f64 },

    #[error("numerical failure: {0}")]
    NumericalError(String),

    #[error("leading block-Toeplitz submatrix at level {level} is ill-conditioned (condition {condition:e})")]
    IllConditioned { level: usize, condition: f64 },

    #[error("Verblunsky coefficient {level} left the Siegel disk (margin {margin:e})")]
    DecompositionError { level: usize, margin: f64 },

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
