use thiserror::Error;

/// Crate-wide error type.
///
/// The CLI maps variants to exit codes: config errors exit 2, solver
/// non-convergence exits 3, artifact mismatches exit 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(
        "value iteration did not converge: delta {last_delta:.3e} after {iterations} sweeps \
         (tolerance {tolerance:.3e})"
    )]
    NonConvergence {
        iterations: usize,
        last_delta: f64,
        tolerance: f64,
    },

    #[error("trajectory enumeration exceeded the path budget of {budget} leaves")]
    PathBudgetExceeded { budget: usize },

    #[error("empty return sample")]
    EmptySample,

    #[error("config error: {0}")]
    Config(String),

    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
