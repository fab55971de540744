use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Error, Debug)]
pub enum TtdeError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dense object with {entries} entries exceeds the memory cap of {cap}")]
    MemoryCap { entries: usize, cap: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("requested rank {rank} at cut {cut} exceeds the available dimension {available}")]
    RankTooLarge {
        cut: usize,
        rank: usize,
        available: usize,
    },

    #[error("{count} sample(s) fall outside the domain of dimension {dim}")]
    OutOfDomain { dim: usize, count: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, TtdeError>;
