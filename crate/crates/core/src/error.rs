//! Crate-wide error type.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum DdError {
    /// Invalid configuration value or unparseable config file.
    #[error("config: {0}")]
    Config(String),

    /// A domain invariant was violated (bad quaternion, opacity range, shape
    /// mismatch, out-of-range timestep, ...).
    #[error("invariant: {0}")]
    Invariant(String),

    /// Underlying I/O failure.
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed binary container or store layout.
    #[error("format: {0}")]
    Format(String),

    /// Checkpoint/store provenance hashes do not match.
    #[error("incompatible: {0}")]
    Incompatible(String),

    /// A required checkpoint or store is missing.
    #[error("missing: {0}")]
    Missing(String),

    /// Non-finite value encountered where finite math is required.
    #[error("numeric: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, DdError>;

impl DdError {
    /// Stable process exit code per error category (CLI contract).
    pub fn exit_code(&self) -> i32 {
        match self {
            DdError::Config(_) => 3,
            DdError::Missing(_) => 4,
            DdError::Incompatible(_) => 5,
            DdError::Io(_) => 6,
            DdError::Format(_) => 7,
            DdError::Invariant(_) => 8,
            DdError::Numeric(_) => 9,
        }
    }
}
