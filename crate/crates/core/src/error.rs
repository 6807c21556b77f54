use std::path::PathBuf;

use thiserror::Error;

use crate::config::ConfigErrors;
use crate::report::RunReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigErrors),

    #[error("unknown bin {bin} (trainee has {n_bins} bins)")]
    UnknownBin { bin: usize, n_bins: usize },

    #[error("invalid probability {0}: must lie in [0, 1]")]
    InvalidProbability(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("checkpoint format version {found} does not match expected {expected}")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("protocol error ({code}): {message}")]
    Protocol { code: String, message: String },

    #[error("remote call timed out after {0:?}")]
    Timeout(std::time::Duration),

    #[error("connection closed by peer")]
    Disconnected,

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    /// A run failed part-way; `partial` holds everything recorded before the failure.
    #[error("run aborted at step {}: {cause}", partial.wall_steps)]
    Aborted {
        partial: Box<RunReport>,
        cause: Box<Error>,
    },
}

impl Error {
    pub fn protocol(code: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Protocol {
            code: code.into(),
            message: message.into(),
        }
    }

    pub fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    /// The innermost cause, looking through `Aborted` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Aborted { cause, .. } => cause.root(),
            other => other,
        }
    }
}
