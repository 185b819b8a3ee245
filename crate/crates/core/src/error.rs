//! Error type shared by all modules.

use thiserror::Error;

/// Errors produced by model evaluation, calibration, fitting and simulation.
#[derive(Debug, Error)]
pub enum ModelError {
    /// A parameter violates its documented invariant.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Evaluation at a singular operating point (e.g. vanishing SQUID
    /// screening factor).
    #[error("singular operating point: {0}")]
    Singularity(String),

    /// Operating point outside the guarded model domain.
    #[error("domain guard: {0}")]
    DomainGuard(String),

    /// Calibration system has no positive solution.
    #[error("calibration failed: {0}")]
    Calibration(String),

    /// Effective mechanical stiffness went non-positive.
    #[error("mechanical instability: {0}")]
    Instability(String),

    /// The requested fit cannot constrain one of its parameters.
    #[error("unidentifiable fit: {0}")]
    Unidentifiable(String),

    /// Iterative procedure did not converge.
    #[error("no convergence: {0}")]
    NonConvergence(String),

    /// Feedback loop diverged.
    #[error("feedback lock unstable: {0}")]
    LockInstability(String),

    /// Input data carries no usable signal (flat trace, empty set, ...).
    #[error("degenerate data: {0}")]
    Degenerate(String),

    /// Malformed serialized input (CSV/JSON).
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;
