use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates a bound; `field` names it.
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },

    /// The API was called in a state that does not allow it.
    #[error("usage error: {0}")]
    Usage(String),

    /// A non-finite loss or value appeared during training.
    #[error("training fault at env step {step}: {reason}")]
    TrainingFault { step: u64, reason: String },

    #[error("checkpoint load error: {0}")]
    Load(String),

    #[error("parse error in {path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("plot error: {0}")]
    Plot(String),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
