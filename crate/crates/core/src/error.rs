use std::io;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("input contains no sentences")]
    EmptyInput,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("feature indexer is frozen")]
    FrozenIndexer,

    #[error("label set has no \"O\" class")]
    MissingOClass,

    #[error("correlation matrix is not renormalized: {0}")]
    NotRenormalized(String),

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("malformed model file: {0}")]
    Format(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
