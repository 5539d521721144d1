use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("invalid factor specification: {0}")]
    InvalidFactor(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid POVM: {0}")]
    InvalidPovm(String),

    #[error("input ensemble is not tomographically complete (rank {rank}, need {needed})")]
    IncompleteEnsemble { rank: usize, needed: usize },

    #[error("Gram matrix is ill-conditioned (condition number {0:.3e})")]
    IllConditioned(f64),

    #[error("malformed behaviour: {0}")]
    MalformedBehaviour(String),

    #[error("relaxation dimension {dim} exceeds the limit of {limit}")]
    DimensionGuard { dim: usize, limit: usize },

    #[error("unsupported request: {0}")]
    Unsupported(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
