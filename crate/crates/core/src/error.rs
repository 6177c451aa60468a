use std::io;

use thiserror::Error;

/// Errors produced by index construction, search, and persistence.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// Malformed on-disk data. `section` names the array or record being read.
    #[error("format error in {section} at byte offset {offset}: {reason}")]
    Format {
        section: String,
        offset: u64,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(section: impl Into<String>, offset: u64, reason: impl Into<String>) -> Self {
        Error::Format {
            section: section.into(),
            offset,
            reason: reason.into(),
        }
    }
}

pub(crate) fn check_dims(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}
