use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {what}: {message}")]
    Parse { what: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("unknown ticker `{0}`")]
    UnknownTicker(String),

    #[error("unknown concept `{0}`")]
    UnknownConcept(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("infeasible generation request: {0}")]
    Infeasible(String),

    #[error("unsupported {format} format version {found} (supported: {supported})")]
    FormatVersion {
        format: &'static str,
        found: u32,
        supported: u32,
    },

    #[error("missing embedding for text hash {0}")]
    MissingEmbedding(String),

    #[error("degenerate vector: {0}")]
    Degenerate(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(what: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            what: what.into(),
            message: message.to_string(),
        }
    }

    /// Process exit code for the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 3,
            Error::Infeasible(_) => 4,
            _ => 2,
        }
    }
}
