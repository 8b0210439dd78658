//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by model construction, fitting, and generation.
#[derive(Debug, Error)]
pub enum OpcError {
    /// A scalar or structural argument is outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Two arrays that must agree in shape do not.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// The integrator produced a non-finite value.
    #[error("non-finite value during integration at t = {t}")]
    IntegrationFailure { t: f64 },

    /// An ensemble member failed; `member` is its index in draw order.
    #[error("ensemble member {member} failed: {source}")]
    EnsembleMember {
        member: usize,
        #[source]
        source: Box<OpcError>,
    },

    /// A matrix that must be inverted is singular (or numerically so).
    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    /// An operation was applied to snapshots carrying the wrong control kind.
    #[error("wrong control snapshot kind: {0}")]
    ControlKind(String),

    /// Fitting aborted mid-run; `iteration` counts completed Adam steps.
    #[error("optimization aborted at iteration {iteration}: {source}")]
    Optimization {
        iteration: usize,
        #[source]
        source: Box<OpcError>,
    },

    /// A dense linear-algebra routine failed to converge or returned junk.
    #[error("numerical failure: {0}")]
    Numerical(String),
}
