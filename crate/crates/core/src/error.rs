use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in parameter vector at index {0}")]
    NonFinite(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot partition {records} records into {shards} shards")]
    BadPartition { records: usize, shards: usize },

    #[error("initial state is outside the support of the target (log-density {0})")]
    InitOutsideSupport(f64),

    #[error("chain for shard {shard} failed: {source}")]
    Chain {
        shard: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("covariance of machine {machine} is singular after regularization")]
    SingularCovariance { machine: usize },

    #[error("component index {index} out of range for machine {machine} with {len} samples")]
    IndexOutOfRange {
        machine: usize,
        index: usize,
        len: usize,
    },

    #[error("mixture has {components} components, above the enumeration budget of {budget}; use a sampling combiner instead")]
    BudgetExceeded { components: f64, budget: f64 },

    #[error("empty sample set: {0}")]
    Empty(String),

    #[error("missing sample file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {}: {msg}", path.display())]
    Parse { path: PathBuf, msg: String },

    #[error("invalid config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, msg: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.to_string(),
        }
    }
}
