use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: parse error: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    /// A structural or numeric constraint on input data was violated.
    #[error("{0}")]
    Invalid(String),

    /// A configuration value is out of its allowed range.
    #[error("{0}")]
    Config(String),

    #[error("no proposals")]
    NoProposals,

    #[error("no signal")]
    NoSignal,

    #[error("empty evaluation")]
    EmptyEvaluation,

    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Prefixes a validation message with the file it came from.
    pub fn at(self, path: &std::path::Path) -> Self {
        match self {
            Error::Invalid(msg) => Error::Invalid(format!("{}: {msg}", path.display())),
            Error::Dimension(msg) => Error::Dimension(format!("{}: {msg}", path.display())),
            other => other,
        }
    }
}
