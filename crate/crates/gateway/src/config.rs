use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    OpenaiCompatible,
    AnthropicCompatible,
    LocalHttp,
    Mock,
}

impl ProviderKind {
    pub const ALL: [ProviderKind; 4] =
        [ProviderKind::OpenaiCompatible, ProviderKind::AnthropicCompatible, ProviderKind::LocalHttp, ProviderKind::Mock];

    pub fn as_str(self) -> &'static str {
        match self {
            ProviderKind::OpenaiCompatible => "openai_compatible",
            ProviderKind::AnthropicCompatible => "anthropic_compatible",
            ProviderKind::LocalHttp => "local_http",
            ProviderKind::Mock => "mock",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s.trim())
    }
}

impl std::fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Exponential backoff: retry `i` (0-based) waits `base · factor^i`, scaled by
/// a uniform factor in `[1 − jitter, 1 + jitter]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub factor: u32,
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 3, base_delay_ms: 1000, factor: 4, jitter: 0.2 }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self { max_retries: 0, ..Self::default() }
    }

    /// `unit` is a uniform draw in `[0, 1)`.
    pub fn delay(&self, retry: u32, unit: f64) -> Duration {
        let nominal = self.base_delay_ms as f64 * (self.factor as f64).powi(retry as i32);
        let scale = 1.0 + self.jitter * (2.0 * unit - 1.0);
        Duration::from_millis((nominal * scale).round().max(0.0) as u64)
    }
}

/// How the mock answers a revision prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "style")]
pub enum MockRevision {
    /// Returns the prior table unchanged.
    #[default]
    Echo,
    /// Adds `delta` to every prior score, clamped to `[0, 100]`.
    Shift { delta: i16, justify: bool },
}

/// How the mock answers a theme-generation prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockThemes {
    /// Numbered list of the fixture codebook's themes.
    #[default]
    Numbered,
    /// A paragraph with no list.
    Prose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct MockBehavior {
    pub seed: u64,
    pub revision: MockRevision,
    pub themes: MockThemes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub provider: ProviderKind,
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub max_in_flight: usize,
    #[serde(default)]
    pub base_url: String,
    /// Name of the environment variable holding the API key. Never the key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credential_ref: Option<String>,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: u64,
    #[serde(default)]
    pub mock: MockBehavior,
}

fn default_timeout() -> u64 {
    120
}

pub const DEFAULT_TEMPERATURE: f64 = 0.1;

impl ProviderConfig {
    fn base(provider: ProviderKind, model_id: &str, base_url: &str, credential_ref: Option<&str>) -> Self {
        Self {
            provider,
            model_id: model_id.to_string(),
            temperature: DEFAULT_TEMPERATURE,
            max_output_tokens: 4096,
            max_in_flight: 4,
            base_url: base_url.to_string(),
            credential_ref: credential_ref.map(String::from),
            retry: RetryPolicy::default(),
            request_timeout_secs: default_timeout(),
            mock: MockBehavior::default(),
        }
    }

    pub fn mock(seed: u64) -> Self {
        let mut c = Self::base(ProviderKind::Mock, "mock", "", None);
        c.mock.seed = seed;
        c
    }

    pub fn openai(model_id: &str) -> Self {
        Self::base(ProviderKind::OpenaiCompatible, model_id, "https://api.openai.com/v1", Some("OPENAI_API_KEY"))
    }

    pub fn anthropic(model_id: &str) -> Self {
        Self::base(ProviderKind::AnthropicCompatible, model_id, "https://api.anthropic.com/v1", Some("ANTHROPIC_API_KEY"))
    }

    pub fn local(base_url: &str, model_id: &str) -> Self {
        Self::base(ProviderKind::LocalHttp, model_id, base_url, None)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |m: String| Err(GatewayError::InvalidConfig(m));
        if !(self.temperature.is_finite() && (0.0..=2.0).contains(&self.temperature)) {
            return bad(format!("temperature {} is outside [0, 2]", self.temperature));
        }
        if self.max_output_tokens == 0 {
            return bad("max_output_tokens must be positive".into());
        }
        if self.max_in_flight == 0 {
            return bad("max_in_flight must be at least 1".into());
        }
        if self.model_id.trim().is_empty() {
            return bad("model_id is empty".into());
        }
        if !(0.0..=1.0).contains(&self.retry.jitter) {
            return bad(format!("retry jitter {} is outside [0, 1]", self.retry.jitter));
        }
        if self.provider != ProviderKind::Mock {
            if self.base_url.trim().is_empty() {
                return bad(format!("{} provider needs a base_url", self.provider));
            }
            let needs_key = self.provider != ProviderKind::LocalHttp;
            if needs_key && self.credential_ref.as_deref().is_none_or(|c| c.trim().is_empty()) {
                return bad(format!("{} provider needs a credential_ref", self.provider));
            }
        }
        Ok(())
    }

    /// Model identity used in cache keys. Mock behaviour is part of it, so
    /// differently configured mocks never share cached responses.
    pub fn cache_model_id(&self) -> String {
        match self.provider {
            ProviderKind::Mock => format!(
                "{}#{}",
                self.model_id,
                serde_json::to_string(&self.mock).expect("mock behaviour serializes")
            ),
            _ => self.model_id.clone(),
        }
    }

    /// Coder label used in run records, e.g. `mock:mock` or `openai_compatible:gpt-4`.
    pub fn coder_label(&self) -> String {
        format!("{}:{}", self.provider, self.model_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mock_behaviour_is_part_of_cache_identity() {
        let a = ProviderConfig::mock(7);
        assert_ne!(a.cache_model_id(), ProviderConfig::mock(8).cache_model_id());
        let mut b = ProviderConfig::mock(7);
        b.mock.revision = MockRevision::Shift { delta: -10, justify: true };
        assert_ne!(a.cache_model_id(), b.cache_model_id());
        assert_eq!(a.cache_model_id(), ProviderConfig::mock(7).cache_model_id());
        assert_eq!(ProviderConfig::openai("gpt-4").cache_model_id(), "gpt-4");
    }

    #[test]
    fn backoff_schedule() {
        let p = RetryPolicy::default();
        let mid: Vec<u64> = (0..3).map(|i| p.delay(i, 0.5).as_millis() as u64).collect();
        assert_eq!(mid, vec![1000, 4000, 16000]);
        assert_eq!(p.delay(0, 0.0).as_millis(), 800);
        assert!(p.delay(2, 0.999_999).as_millis() <= 19_200);
    }

    #[test]
    fn validation() {
        assert!(ProviderConfig::mock(7).validate().is_ok());
        let mut c = ProviderConfig::mock(7);
        c.temperature = 2.5;
        assert!(c.validate().is_err());
        c.temperature = f64::NAN;
        assert!(c.validate().is_err());
        let mut c = ProviderConfig::openai("gpt-4");
        c.max_in_flight = 0;
        assert!(c.validate().is_err());
        let mut c = ProviderConfig::anthropic("claude-3-opus");
        c.credential_ref = None;
        assert!(c.validate().is_err());
        assert!(ProviderConfig::local("http://127.0.0.1:8080/v1", "llama").validate().is_ok());
    }

    #[test]
    fn config_json_has_no_secret_fields() {
        let json = serde_json::to_value(ProviderConfig::openai("gpt-4")).unwrap();
        assert_eq!(json["credential_ref"], "OPENAI_API_KEY");
        assert_eq!(json["provider"], "openai_compatible");
        let back: ProviderConfig = serde_json::from_value(json).unwrap();
        assert_eq!(back, ProviderConfig::openai("gpt-4"));
    }
}
