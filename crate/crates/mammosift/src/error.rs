//! Crate-wide error type and the exit-code taxonomy used by the CLI.

use std::path::PathBuf;

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// How an error maps to a process exit code.
///
/// Validation problems (bad flags, malformed content, violated invariants,
/// degenerate inputs) exit with 1; filesystem-level problems exit with 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Content or configuration problem; exit code 1.
    Validation,
    /// Filesystem problem (missing, unreadable, unwritable); exit code 2.
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: file not found")]
    NotFound { path: PathBuf },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{path}: corrupt header: {detail}")]
    CorruptHeader { path: PathBuf, detail: String },

    #[error("{path}: unsupported bit depth (expected 16-bit samples)")]
    UnsupportedBitDepth { path: PathBuf },

    #[error("{path}: {detail}")]
    Schema { path: PathBuf, detail: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("missing detection files: {}", .0.join(", "))]
    MissingDetections(Vec<String>),
}

impl Error {
    /// Classifies the error for exit-code purposes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NotFound { .. } | Error::Io { .. } | Error::MissingDetections(_) => {
                ErrorKind::Io
            }
            _ => ErrorKind::Validation,
        }
    }

    /// Wraps a `std::io::Error` with the path it concerns, mapping
    /// `NotFound` to the dedicated variant so it reports distinctly.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound { path }
        } else {
            Error::Io { path, source }
        }
    }
}
