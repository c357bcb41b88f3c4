use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum NhbError {
    /// A precondition on the inputs was violated (wrong dimensions, non-finite values, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A configuration lies outside the potential's domain, where U = +inf.
    #[error("outside potential domain: {0}")]
    Domain(String),

    /// A specification or parameter set was rejected at construction time.
    #[error("rejected: {0}")]
    Rejected(String),

    /// A finite-difference stencil would leave the domain.
    #[error("finite-difference stencil leaves the domain at coordinate {coordinate}")]
    Stencil { coordinate: usize },

    /// An integrator step could not be completed inside the domain.
    #[error("step {step} failed after {halvings} dt halvings: {reason}")]
    StepFailed {
        step: u64,
        halvings: u32,
        reason: String,
        /// Last accepted state before the failing step.
        state: Box<crate::model::State>,
    },

    /// Requested target is not reachable (outside the support set or no valid path).
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// No in-domain path between two configurations was found within budget.
    #[error("unreachable estimate: {0}")]
    Unreachable(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, NhbError>;

pub(crate) fn contract(msg: impl Into<String>) -> NhbError {
    NhbError::Contract(msg.into())
}
