use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty mask: {0}")]
    EmptyMask(&'static str),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("point behind camera (depth {depth:.3e}) at frame {frame}, joint {joint}")]
    BehindCamera { frame: usize, joint: usize, depth: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.to_string(),
        }
    }

    /// True for failures caused by bad input data or files rather than by
    /// numerics.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::NonFinite(_))
    }
}
