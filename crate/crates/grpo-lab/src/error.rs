//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the training lab.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a precondition (degenerate ground
    /// truth, index out of range, mismatched dimensions, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration file or parameter set failed validation.
    #[error("invalid config: {0}")]
    Config(String),

    /// A required input file for a pipeline stage is missing.
    #[error("missing input: {0}")]
    MissingInput(String),

    /// Training produced a non-finite objective or gradient.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    TomlParse(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
