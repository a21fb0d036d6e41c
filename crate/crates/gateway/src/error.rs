use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GatewayError {
    #[error("invalid provider config: {0}")]
    InvalidConfig(String),
    #[error("credential environment variable {variable} is not set")]
    MissingCredential { variable: String },
    #[error("provider rejected credentials (HTTP {status}): {message}")]
    Unauthorized { status: u16, message: String },
    #[error("network failure after {attempts} attempt(s): {message}")]
    Network { attempts: u32, message: String },
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32, retry_after_secs: Option<u64> },
    #[error("provider error (HTTP {status}): {message}")]
    Provider { status: u16, message: String },
    #[error("cache file {path}: {message}")]
    Cache { path: PathBuf, message: String },
    #[error("batch is empty")]
    EmptyBatch,
}

impl GatewayError {
    /// Missing or rejected credentials.
    pub fn is_auth(&self) -> bool {
        matches!(self, GatewayError::MissingCredential { .. } | GatewayError::Unauthorized { .. })
    }
}
