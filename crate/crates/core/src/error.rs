use std::path::PathBuf;

use crate::RecordId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("invalid config value for `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown record id {0}")]
    UnknownId(RecordId),

    #[error("duplicate record id {0}")]
    DuplicateId(RecordId),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("zero vector cannot be normalized (record {0})")]
    ZeroVector(RecordId),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("HTTP error: {0}")]
    Http(String),

    #[error("count mismatch: sent {expected} texts, received {found} results")]
    CountMismatch { expected: usize, found: usize },

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("infeasible synthetic spec: {0}")]
    Infeasible(String),

    #[error("missing input {path}: run `{stage}` first")]
    MissingInput { path: PathBuf, stage: &'static str },
}

impl Error {
    pub(crate) fn config(key: &str, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}
