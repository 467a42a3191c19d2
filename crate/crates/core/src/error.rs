use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Inconsistent or invalid arguments supplied by the caller.
    Usage,
    /// Missing, unreadable or malformed input data.
    Data,
    /// The scorer sidecar misbehaved or went away.
    Protocol,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", display_path(.path))]
    Io {
        path: Option<PathBuf>,
        #[source]
        source: io::Error,
    },

    #[error("{}:{line}: invalid UTF-8", display_path(.path))]
    InvalidUtf8 { path: Option<PathBuf>, line: u64 },

    #[error("{}:{line}: {reason}", display_path(.path))]
    Malformed {
        path: Option<PathBuf>,
        line: u64,
        reason: String,
    },

    #[error("{what}: expected {expected} but found {found}")]
    CountMismatch {
        what: String,
        expected: u64,
        found: u64,
    },

    #[error("invalid sentence pair {index}: {reason}")]
    InvalidPair { index: u64, reason: String },

    #[error("{}: {reason}", display_path(.path))]
    EmbeddingFormat {
        path: Option<PathBuf>,
        reason: String,
    },

    #[error("non-finite embedding value at row {row}, column {column}")]
    NonFiniteEmbedding { row: u64, column: usize },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("zero {side} embedding at pair {index}")]
    ZeroVector { index: u64, side: &'static str },

    #[error("scorer handshake failed: {0}")]
    Handshake(String),

    #[error("scorer protocol violation: {0}")]
    Protocol(String),

    #[error("scorer reported an error for pair {index}: {message}")]
    PairRejected { index: u64, message: String },

    #[error("scorer exited before answering {outstanding} outstanding request(s)")]
    SidecarExited { outstanding: usize },

    #[error("{0}")]
    Statistics(String),

    #[error("{0}")]
    InvalidArgument(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: Some(path.into()),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Handshake(_)
            | Error::Protocol(_)
            | Error::PairRejected { .. }
            | Error::SidecarExited { .. } => ErrorClass::Protocol,
            Error::InvalidArgument(_) => ErrorClass::Usage,
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn with_path(self, path: &std::path::Path) -> Self {
        let p = Some(path.to_path_buf());
        match self {
            Error::Io { path: None, source } => Error::Io { path: p, source },
            Error::InvalidUtf8 { path: None, line } => Error::InvalidUtf8 { path: p, line },
            Error::Malformed {
                path: None,
                line,
                reason,
            } => Error::Malformed {
                path: p,
                line,
                reason,
            },
            Error::EmbeddingFormat { path: None, reason } => {
                Error::EmbeddingFormat { path: p, reason }
            }
            other => other,
        }
    }
}

impl From<io::Error> for Error {
    fn from(source: io::Error) -> Self {
        Error::Io { path: None, source }
    }
}

fn display_path(path: &Option<PathBuf>) -> String {
    match path {
        Some(p) => p.display().to_string(),
        None => "<stream>".to_string(),
    }
}
