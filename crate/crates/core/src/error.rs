use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by every operation in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A group (seen, absent or a class subset) has no samples to evaluate.
    #[error("empty group: {0}")]
    EmptyGroup(String),

    #[error("missing class {0}: no samples or no mean available")]
    MissingClass(usize),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),

    #[error("training failed in {stage} at epoch {epoch}: {reason}")]
    TrainingFailure {
        stage: String,
        epoch: usize,
        reason: String,
    },

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid_arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical kind (divergent training); false for
    /// malformed or inconsistent data.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::TrainingFailure { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
