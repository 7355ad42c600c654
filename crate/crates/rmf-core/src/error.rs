use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("sieve limit {0} outside [2, 2^31]")]
    LimitOutOfRange(u64),

    #[error("{value} outside sieve range [1, {limit}]")]
    OutOfRange { value: u64, limit: u64 },

    #[error("empty set rejected: {0}")]
    EmptySet(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("corrupt cache: {0}")]
    CorruptCache(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
