use std::path::PathBuf;

use thiserror::Error;

/// Error type shared by the whole pipeline.
///
/// The CLI maps these onto exit codes: everything here except `Numerical`
/// is a data error (exit 2); `Numerical` is exit 3.
#[derive(Debug, Error)]
pub enum DaselError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Fatal file-format problem (bad header, bad magic, truncation).
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },

    /// A caller violated an operation's contract.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Inconsistent or unusable data (empty class, mismatched tables, ...).
    #[error("{0}")]
    Data(String),

    /// Non-finite value produced inside the network.
    #[error("numerical error in {layer}: {msg}")]
    Numerical { layer: &'static str, msg: String },
}

impl DaselError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DaselError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        DaselError::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, DaselError>;
