use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: PathBuf, reason: String },

    #[error("length mismatch: channel `{channel}` has {found} samples, expected {expected}")]
    LengthMismatch {
        channel: String,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in channel `{channel}` at sample {index}")]
    NonFinite { channel: String, index: usize },

    #[error("invalid demonstration: {0}")]
    InvalidDemo(String),

    #[error("degenerate chord: length {length:.3e} m is below {min:.0e} m")]
    DegenerateChord { length: f64, min: f64 },

    #[error("position coincides with obstacle center")]
    DegeneratePosition,

    #[error("stiffness matrix must be diagonal")]
    NonDiagonalKmax,

    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParam { key: String, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("missing dataset: {0}")]
    MissingDataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn malformed(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::MalformedFile {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn param(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad user input (files, config) rather than by
    /// the simulation itself.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::MalformedFile { .. }
                | Error::LengthMismatch { .. }
                | Error::NonFinite { .. }
                | Error::InvalidDemo(_)
                | Error::InvalidParam { .. }
                | Error::Config(_)
                | Error::MissingDataset(_)
                | Error::DegenerateChord { .. }
                | Error::NonDiagonalKmax
                | Error::Io(_)
        )
    }
}
