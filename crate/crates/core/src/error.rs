use thiserror::Error;

/// Errors produced by the reach-set library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(String),

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("eigenvalue iteration did not converge after {sweeps} sweeps")]
    EigNonConvergence { sweeps: usize },

    #[error("rank-deficient least-squares system: {0}")]
    RankDeficient(String),

    #[error("direction vector must be nonzero")]
    ZeroDirection,

    #[error("invalid index set: {0}")]
    InvalidIndex(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("time {t} outside the grid span [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("positive definiteness lost at t = {t}: {detail}")]
    PositivityLoss { t: f64, detail: String },

    #[error("solver did not converge within {iterations} iterations (gap {gap:e})")]
    NonConvergence { iterations: usize, gap: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for usage/configuration problems,
    /// 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::InvalidInput(_)
            | Error::InvalidIndex(_)
            | Error::DimensionMismatch(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
