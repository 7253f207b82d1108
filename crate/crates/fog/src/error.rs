//! Crate-wide error type shared by every module.

use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("replay buffer is empty")]
    EmptyBuffer,

    #[error("episode already finished after step {step}")]
    EpisodeFinished { step: u32 },

    /// Transport-level embedding failure after the configured retries.
    #[error("embedding transport failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },

    #[error("metric `{metric}` does not support {state_kind} states")]
    UnsupportedMetric {
        metric: &'static str,
        state_kind: &'static str,
    },

    /// Malformed score configuration (bad predicate text, bad intention set).
    #[error("score spec: {0}")]
    ScoreSpec(String),

    #[error("training diverged: {0}")]
    TrainingDivergence(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }
}
