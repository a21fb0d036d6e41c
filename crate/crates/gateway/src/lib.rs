//! Uniform client over chat-completion providers.
//!
//! [`Gateway`] sends a [`RenderedPrompt`](themeloom_core::RenderedPrompt) to
//! one configured provider, retrying transient failures, and optionally
//! records every response in a content-addressed [`ResponseCache`] so later
//! runs replay byte-for-byte. The `mock` provider answers offline and
//! deterministically.

mod cache;
mod client;
mod config;
mod error;
pub mod mock;
pub mod transport;

use serde::{Deserialize, Serialize};
use themeloom_core::corpus::{Codebook, Corpus};
use themeloom_core::payload::{parse_payload, ParseOptions, PayloadError};
use themeloom_core::ScoreMatrix;

pub use cache::{CacheEntry, CacheKey, ResponseCache};
pub use client::{Gateway, Sleeper, ThreadSleeper};
pub use config::{MockBehavior, MockRevision, MockThemes, ProviderConfig, ProviderKind, RetryPolicy, DEFAULT_TEMPERATURE};
pub use error::GatewayError;
pub use mock::mock_complete;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawResponse {
    /// Exactly as returned by the provider.
    pub text: String,
    pub provider_echo: String,
    pub latency_ms: u64,
    pub from_cache: bool,
}

/// Parses a response against the output contract for `corpus` x `codebook`.
pub fn parse_score_matrix(
    response: &RawResponse,
    coder_id: &str,
    codebook: &Codebook,
    corpus: &Corpus,
    opts: ParseOptions,
) -> Result<ScoreMatrix, PayloadError> {
    parse_payload(&response.text, coder_id, codebook, corpus, opts)
}
