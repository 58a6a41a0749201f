use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration, shape mismatch, or unknown enum value.
    #[error("configuration error: {0}")]
    Config(String),

    /// API misuse, e.g. differentiating a non-scalar root.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("physical validity error: {0}")]
    Physical(String),

    #[error("integration failed at t = {time:.6} s (RK4 stage {stage}): non-finite state derivative")]
    Integration { time: f64, stage: usize },

    /// Training produced a non-finite loss or gradient. Carries the last
    /// parameter set whose loss was finite.
    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged {
        epoch: usize,
        reason: String,
        last_good: Option<Box<crate::model::Checkpoint>>,
    },

    /// A required file (dataset, checkpoint, manifest) is absent.
    #[error("missing artifact {path}: run `{producer}` first")]
    MissingArtifact { path: PathBuf, producer: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
