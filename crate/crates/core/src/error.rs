//! Error taxonomy shared by every module in the crate.
//!
//! Variants map one-to-one onto the diagnostic categories the CLI reports:
//! configuration mistakes, bad data, violated graph structure, tensor shape
//! mismatches, numeric failures during training, and evaluation misuse.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value or inconsistent options.
    #[error("config error: {0}")]
    Config(String),

    /// Dataset files missing, malformed, or inconsistent with their manifest.
    #[error("data error: {0}")]
    Data(String),

    /// Graph structure violation: out-of-range endpoints, bad schema, etc.
    #[error("structural error: {0}")]
    Structural(String),

    /// Tensor dimension mismatch, annotated with the offending operation.
    #[error("shape error: {0}")]
    Shape(String),

    /// Non-finite values encountered during optimization.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Evaluation called with an empty mask or otherwise unusable inputs.
    #[error("eval error: {0}")]
    Eval(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn eval(msg: impl Into<String>) -> Self {
        Error::Eval(msg.into())
    }
}
