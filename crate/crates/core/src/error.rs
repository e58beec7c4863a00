use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error in {kind}: {detail}")]
    Dimension { kind: &'static str, detail: String },

    #[error("numeric error: {kind} produced a non-finite value")]
    Numeric { kind: &'static str },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("vocabulary error: {0}")]
    Vocabulary(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Configuration(_) => 1,
            Error::Numeric { .. } => 3,
            Error::Dimension { .. }
            | Error::Vocabulary(_)
            | Error::Alignment(_)
            | Error::Dataset(_)
            | Error::Index(_)
            | Error::Checkpoint(_)
            | Error::Io { .. } => 2,
        }
    }
}
