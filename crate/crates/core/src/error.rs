use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand dimensions disagree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An argument violates an operation's precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A value breaks a type invariant (non-finite data, out-of-range attention, ...).
    #[error("invariant violated: {0}")]
    Invariant(String),

    /// Malformed encoded data (RLE counts, tensor payloads).
    #[error("format error: {0}")]
    Format(String),

    /// Semantically invalid input record. `record` is a path such as `instances[3].counts`.
    #[error("{record}: {message}")]
    Data { record: String, message: String },

    #[error("degenerate attention: row {row} has no positive mass")]
    DegenerateAttention { row: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn data(record: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Data {
            record: record.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Prefix the record path of a [`Error::Data`]/[`Error::Format`] error.
    pub(crate) fn at(self, record: impl Into<String>) -> Self {
        let record = record.into();
        match self {
            Error::Data {
                record: inner,
                message,
            } => Error::data(format!("{record}.{inner}"), message),
            other => Error::data(record, other.to_string()),
        }
    }
}
