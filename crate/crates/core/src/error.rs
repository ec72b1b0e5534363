//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Errors produced by state construction, linear algebra, and measurement ops.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("input is not Hermitian (relative asymmetry {residual:.3e})")]
    NonHermitianInput { residual: f64 },

    #[error("eigensolver did not converge within {sweeps} sweeps (off-norm {off_norm:.3e})")]
    ConvergenceFailure { sweeps: usize, off_norm: f64 },

    #[error("matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("invalid state: {check} violated (value {value:.3e})")]
    InvalidState { check: &'static str, value: f64 },

    #[error("finite-difference stencil leaves the configured domain at parameter {param}")]
    DomainEdge { param: usize },

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("state is not quasi-pure: {criterion} residual {residual:.3e} exceeds {tolerance:.3e}")]
    NotQuasiPure {
        criterion: String,
        residual: f64,
        tolerance: f64,
    },

    #[error("operation requires at least two estimation parameters (state has {found})")]
    NeedTwoParams { found: usize },

    #[error("outcome probability {value:.3e} too small for a classical Fisher term")]
    ZeroProbability { value: f64 },

    #[error("convex decomposition does not reconstruct the state (residual {residual:.3e})")]
    BadDecomposition { residual: f64 },

    #[error("invalid POVM: {reason}")]
    InvalidPovm { reason: String },

    #[error("lambda must lie strictly inside (0, 1), got {value}")]
    LambdaOutOfRange { value: f64 },

    #[error("operator is not a projector (residual {residual:.3e})")]
    NotAProjector { residual: f64 },

    #[error("discard element of the POVM is not positive (min eigenvalue {min_eigenvalue:.3e})")]
    IncompletePovm { min_eigenvalue: f64 },

    #[error("operator is not unitary (residual {residual:.3e})")]
    NotUnitary { residual: f64 },

    #[error("success probability {value:.3e} is numerically zero")]
    ZeroSuccessProbability { value: f64 },

    #[error("input must be strictly positive, got {value}")]
    NonPositiveInput { value: f64 },

    #[error("mode truncation insufficient: tail mass {tail:.3e} exceeds {limit:.3e}")]
    TruncationInsufficient { tail: f64, limit: f64 },

    #[error("ancilla dimension {ancilla} smaller than required {required}")]
    DimensionTooSmall { ancilla: usize, required: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
