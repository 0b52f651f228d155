use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at line {line}, column {column}: {msg}")]
    Parse {
        line: usize,
        column: usize,
        msg: String,
    },

    #[error("unsupported cardinality: column {column} has level {level} (codes must be at most 253)")]
    UnsupportedCardinality { column: usize, level: u64 },

    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("numeric failure in {context}: {msg}")]
    Numeric { context: String, msg: String },

    #[error("chain failure at iteration {iteration}: {msg}")]
    ChainFailure { iteration: usize, msg: String },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_)
            | Error::InvalidInput(_)
            | Error::Parse { .. }
            | Error::UnsupportedCardinality { .. }
            | Error::Format { .. } => 2,
            Error::Numeric { .. } | Error::ChainFailure { .. } | Error::Internal(_) => 3,
            Error::Io { .. } => 4,
        }
    }
}
