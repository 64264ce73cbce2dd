use std::path::PathBuf;

use thiserror::Error;

/// Error type shared by every module of the engine.
#[derive(Debug, Error)]
pub enum Error {
    /// Structural mismatch between an input and a layer/head configuration
    /// (channel counts, kernel vs input size, feature dimensions).
    #[error("configuration error: {0}")]
    Config(String),

    /// Invalid caller-provided data (degenerate box, crop too small, ...).
    #[error("input error: {0}")]
    Input(String),

    /// A window or sample position falls outside the source grid.
    #[error("range error: {0}")]
    Range(String),

    /// Rejection sampling exhausted its attempt budget.
    #[error("sampling error: predicate '{label}' rejected all of {attempts} attempts")]
    Sampling { label: String, attempts: usize },

    /// Head training cannot run (e.g. a required class has no samples).
    #[error("training error: {0}")]
    Training(String),

    /// Malformed weight stream; `offset` is the byte position of the problem.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// Sequence ingestion failure with file (and line, where known) context.
    #[error("ingestion error in {path}{}: {message}", line.map(|l| format!(":{l}")).unwrap_or_default())]
    Ingest {
        path: PathBuf,
        line: Option<usize>,
        message: String,
    },

    /// Synthetic sequence specification violates its own invariants.
    #[error("synth spec error: {0}")]
    Spec(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
