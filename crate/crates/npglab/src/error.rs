//! Crate-wide error type and result alias.

use thiserror::Error;

/// Errors surfaced by validation, numerics, and experiment plumbing.
#[derive(Debug, Error)]
pub enum Error {
    /// Dimension or layout mismatch between inputs.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Input outside the documented domain (probabilities, ranges, supports).
    #[error("domain error: {0}")]
    Domain(String),

    /// A linear solve or factorization failed its residual or rank contract.
    #[error("numerics: {0}")]
    Numerics(String),

    /// A logit left the representable range; the computation cannot continue.
    #[error("logit overflow: {0}")]
    Overflow(String),

    /// Experiment configuration is invalid or inconsistent.
    #[error("config: {0}")]
    Config(String),

    /// Malformed on-disk artifact (CSV, JSON vector files).
    #[error("parse error: {0}")]
    Parse(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
