use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A record in a newline-delimited file could not be decoded.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// The remote predictor answered, but not according to the wire protocol.
    #[error("protocol error for {request}: {message}")]
    Protocol { request: String, message: String },

    /// The remote predictor could not be reached; the request may be retried.
    #[error("transport error for {request} after {attempts} attempt(s): {message}")]
    Transport {
        request: String,
        attempts: u32,
        message: String,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn is_retriable(&self) -> bool {
        matches!(self, Error::Transport { .. })
    }
}
