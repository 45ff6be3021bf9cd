use std::io;

use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (shape mismatch, bad index,
    /// stepping a finished episode, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The configuration (environment layout, status schema, training
    /// config) is invalid.
    #[error("configuration error: {0}")]
    Config(String),

    /// A checkpoint file is unreadable or does not match the expected
    /// layout.
    #[error("corrupt checkpoint: {0}")]
    Checkpoint(String),

    /// One or more learner threads panicked.
    #[error("worker failure: {0}")]
    Worker(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
