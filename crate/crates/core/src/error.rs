use thiserror::Error;

/// Errors raised across the library. Each variant maps to one failure class
/// so callers (the CLI in particular) can choose an exit code from it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("invalid domain: {0}")]
    Domain(String),

    #[error("solver did not converge: {reason} (last residual {residual:.3e})")]
    Convergence { reason: String, residual: f64 },

    #[error("leaves the admissible cone: {0}")]
    Cone(String),

    #[error("numerical inconsistency: {0}")]
    Consistency(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("solution is not converged")]
    Unconverged,

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}
