use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported format: {0}")]
    Format(String),

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("unsupported file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Inputs that violate a caller-side contract: mismatched shapes or
    /// configs that disagree between a reference header and the analysis.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("optimization diverged at iteration {iteration}, epoch {epoch}: {detail}")]
    Optimization {
        iteration: usize,
        epoch: usize,
        detail: String,
    },

    #[error("reference provider failed ({context}): {source}")]
    Provider {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("external command failed: {0}")]
    External(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input or configuration rather than
    /// a failure while running.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Contract(_))
            || matches!(self, Error::Provider { source, .. } if source.is_usage())
    }
}
