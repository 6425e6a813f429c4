use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to load {path}: {reason}")]
    Load { path: PathBuf, reason: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("checksum mismatch for {0}")]
    Checksum(PathBuf),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite loss at step {step}: {terms}")]
    NonFinite { step: usize, terms: String },

    #[error("no surface samples: {0}")]
    NoSamples(String),

    #[error("mesh audit failed: {0}")]
    Audit(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing upstream artifact {path}: run `{stage}` first")]
    MissingArtifact { path: PathBuf, stage: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Errors caused by bad or missing inputs rather than a failed computation.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Load { .. }
                | Error::Validation(_)
                | Error::Shape(_)
                | Error::Checksum(_)
                | Error::Config(_)
                | Error::MissingArtifact { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn load(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Load {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
