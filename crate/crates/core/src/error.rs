use std::path::PathBuf;

use thiserror::Error;

use crate::trainer::RunRecord;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent user input.
    #[error("invalid input: {0}")]
    Input(String),

    /// A caller broke a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("tensor: {0}")]
    Tensor(#[from] candle_core::Error),

    #[error("training diverged at epoch {epoch}: {message}")]
    Diverged {
        epoch: usize,
        message: String,
        record: Box<RunRecord>,
    },

    #[error("stage `{stage}` has not produced {path}; run it first")]
    MissingArtifact { stage: String, path: PathBuf },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// True for failures caused by the caller's inputs rather than by a bug.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Input(_)
                | Error::Io { .. }
                | Error::Json { .. }
                | Error::Config(_)
                | Error::MissingArtifact { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
