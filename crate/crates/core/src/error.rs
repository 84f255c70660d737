//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by corpus handling, training, and reporting.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value (bad hyperparameter, empty template list, ...).
    #[error("config: {0}")]
    Config(String),

    /// Input data violates an invariant (length mismatch, overlapping spans, ...).
    #[error("validation: {0}")]
    Validation(String),

    /// Malformed record in a line-oriented file.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Checkpoint file is corrupt, truncated, or has the wrong version.
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    /// A pipeline stage failed; wraps the underlying cause.
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-parseable class name, used by the CLI for exit diagnostics.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Validation(_) => "validation",
            Error::Parse { .. } => "parse",
            Error::Checkpoint(_) => "checkpoint",
            Error::Stage { .. } => "stage",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn in_stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stage {
            stage,
            source: Box::new(source),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
