use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or hyper-parameters that do not fit together.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called out of order (e.g. backward before forward).
    #[error("state error: {0}")]
    State(String),

    /// A loss or activation became non-finite during training.
    #[error("training diverged: {0}")]
    Divergence(String),

    /// Boundary-sample mining produced a non-finite sample.
    #[error("mining diverged at step {step}: {detail}")]
    Mining { step: usize, detail: String },

    /// Malformed or inconsistent input data.
    #[error("input error{}: {msg}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Input { msg: String, line: Option<usize> },

    /// A serialized artifact with an unsupported format version.
    #[error("format error: {0}")]
    Format(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input { msg: msg.into(), line: None }
    }

    pub(crate) fn input_at(line: usize, msg: impl Into<String>) -> Self {
        Error::Input { msg: msg.into(), line: Some(line) }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
