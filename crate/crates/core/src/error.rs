//! Crate-wide error type.
//!
//! Every fallible operation in the library returns [`CoreError`]. The
//! variants separate bad input (rejected data, too little data, shape
//! mismatches, out-of-domain arguments) from numerical trouble
//! (quadrature that cannot reach its tolerance, matrices that are not
//! positive definite) so callers can map them to distinct exit codes.

use thiserror::Error;

/// Errors produced by the modelling, simulation, and reporting routines.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Input data violates a documented precondition (non-finite values,
    /// non-positive prices, unsorted timestamps, weights off the simplex...).
    #[error("rejected input: {0}")]
    RejectedInput(String),

    /// Not enough observations for the requested operation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Mismatched lengths or matrix shapes.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A scalar argument lies outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Numerical integration could not reach its accuracy target within the
    /// node budget; the message carries the achieved error estimate.
    #[error("integration failure: {0}")]
    IntegrationFailure(String),

    /// A matrix that must be positive definite is not (and was not repairable
    /// where repair is allowed).
    #[error("not positive definite: {0}")]
    NotPositiveDefinite(String),

    /// A data column is constant where variation is required, e.g. for rank
    /// correlation; the message names the offending column(s).
    #[error("constant column: {0}")]
    ConstantColumn(String),

    /// The sampler or an iterative solver exhausted its iteration budget
    /// without meeting its convergence criterion in a context where that is
    /// a hard failure (most samplers instead return a flagged result).
    #[error("no convergence: {0}")]
    NoConvergence(String),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, CoreError>;
