use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("amplitude infeasible: |s| must stay below {max_feasible}")]
    Amplitude { max_feasible: f64 },

    #[error("collar too small: {0}")]
    Collar(String),

    #[error("no convergence: {0}")]
    NonConvergence(String),

    #[error("balance did not converge within {iterations} iterations (residual {residual:e})")]
    Balance { residual: f64, iterations: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
