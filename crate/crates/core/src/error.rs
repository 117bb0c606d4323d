use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {path}: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("malformed scores file {path}: {message}")]
    Scores { path: PathBuf, message: String },
    #[error("record {id:?} at byte offset {offset}: blob ends at {blob_len} bytes, need {needed}")]
    Truncated {
        id: String,
        offset: u64,
        needed: u64,
        blob_len: u64,
    },
    #[error("record {id:?} has non-finite value in frame {frame} at byte offset {offset}")]
    NonFinite {
        id: String,
        frame: usize,
        offset: u64,
    },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("unknown id {0:?}")]
    UnknownId(String),
    #[error("record {id:?}: {message}")]
    InvalidRecord { id: String, message: String },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("record {id:?} is missing {field}")]
    MissingValue { id: String, field: &'static str },
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("budget {budget} exceeds pool of {pool}")]
    BudgetTooLarge { budget: usize, pool: usize },
    #[error("exhaustive search over {0} subsets exceeds the limit")]
    InstanceTooLarge(u128),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
