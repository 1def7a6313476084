use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = ElmError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ElmError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    /// Malformed IDX or CSV input. `location` is a byte offset for binary
    /// files and a row/column pair for text files.
    #[error("format error in {path} at {location}: {message}")]
    Format {
        path: PathBuf,
        location: String,
        message: String,
    },

    /// A factorization or solve failed. `matrix` names the operand
    /// (for instance `S_C` or `I/alpha + H^T H`).
    #[error("numeric failure on {matrix}: {detail}")]
    Numeric { matrix: String, detail: String },

    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ElmError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Self::InvalidArgument(msg.into())
    }

    pub(crate) fn numeric(matrix: impl Into<String>, detail: impl Into<String>) -> Self {
        Self::Numeric {
            matrix: matrix.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, location: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Format {
            path: path.into(),
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}
