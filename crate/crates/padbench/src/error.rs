//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by any padbench subsystem.
#[derive(Debug, thiserror::Error)]
pub enum PadError {
    /// Input violates a documented precondition or invariant.
    #[error("domain error: {0}")]
    Domain(String),

    /// Text that should match a known grammar or schema does not.
    #[error("parse error: {0}")]
    Parse(String),

    /// A persisted artifact (model file, manifest, score file) is malformed
    /// or carries an unsupported schema version.
    #[error("format error: {0}")]
    Format(String),

    /// Missing or unusable runtime configuration (e.g. backbone checkpoint).
    #[error("configuration error: {0}")]
    Config(String),

    /// Filesystem failure, always naming the offending path.
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PadError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PadError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        PadError::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, PadError>;
