//! Crate-wide error type.
//!
//! Three families map onto the CLI exit codes: domain errors (bad inputs to
//! an operation), config errors (an experiment description that cannot run),
//! and I/O errors (which always carry the offending path).

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violates an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// An experiment configuration is inconsistent or infeasible.
    #[error("config error: {0}")]
    Config(String),

    /// A file operation failed; the path is part of the message.
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
