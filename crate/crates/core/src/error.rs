use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("gradient requested of a non-scalar output with shape {0:?}")]
    NonScalarOutput(Vec<usize>),

    #[error("output does not depend on any recorded parameter")]
    Detached,

    #[error("variable belongs to a different tape")]
    ForeignVariable,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Data(#[from] DataError),

    #[error("loss diverged (non-finite) at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Problems found while reading or validating a dataset.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("{file}:{line}: {message}")]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate news id {0:?}")]
    DuplicateId(String),

    #[error("no propagation tree for news id {0:?}")]
    MissingTree(String),

    #[error("propagation tree refers to unknown news id {0:?}")]
    UnknownTree(String),

    #[error("duplicate propagation tree for news id {0:?}")]
    DuplicateTree(String),

    #[error("{what} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("hyperedge {hyperedge:?} references unknown news id {member:?}")]
    UnknownMember { hyperedge: String, member: String },

    #[error("hyperedge {0:?} has no members")]
    EmptyHyperedge(String),

    #[error("invalid propagation tree for {news_id:?}: {reason}")]
    InvalidTree { news_id: String, reason: String },

    #[error("label for {id:?} must be 0 or 1, got {label}")]
    InvalidLabel { id: String, label: i64 },

    #[error("dataset is empty")]
    Empty,

    #[error("cannot split {0} items into three non-empty sets")]
    TooSmallToSplit(usize),

    #[error("empty evaluation set")]
    EmptyIndexSet,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
