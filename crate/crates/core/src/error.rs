use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("node index {index} out of range for graph with {num_nodes} nodes")]
    NodeOutOfRange { index: usize, num_nodes: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid noise spec: {0}")]
    InvalidNoise(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty index set passed to {0}")]
    EmptySet(&'static str),

    /// Dataset validation failure; lists every violated invariant.
    #[error("invalid dataset:\n  {}", .0.join("\n  "))]
    InvalidDataset(Vec<String>),

    #[error("parse error in {path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by bad user input (as opposed to runtime faults).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Shape { .. }
                | Error::NodeOutOfRange { .. }
                | Error::InvalidNoise(_)
                | Error::InvalidConfig(_)
                | Error::EmptySet(_)
                | Error::InvalidDataset(_)
                | Error::Parse { .. }
                | Error::Json { .. }
        )
    }
}
