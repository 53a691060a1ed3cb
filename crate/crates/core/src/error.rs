//! Error types shared across the toolkit.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or parameter combination.
    #[error("configuration error: {0}")]
    Config(String),
    /// Sequence/tensor dimensions do not line up.
    #[error("shape error: {0}")]
    Shape(String),
    /// Spectral clusters collide or no dominant tone exists.
    #[error("ambiguity error: {0}")]
    Ambiguity(String),
    /// A frequency or index falls outside the usable range.
    #[error("range error: {0}")]
    Range(String),
    /// An operation was called in an invalid order.
    #[error("state error: {0}")]
    State(String),
    /// A binary file failed to parse.
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },
    /// A run (training, study) failed at runtime.
    #[error("run error: {0}")]
    Run(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
