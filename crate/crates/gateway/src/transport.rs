//! HTTP transport and the chat-completion wire dialects.

use std::time::Duration;

use serde_json::{json, Value};
use themeloom_core::RenderedPrompt;

use crate::config::{ProviderConfig, ProviderKind};

pub const ANTHROPIC_VERSION: &str = "2023-06-01";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    /// `Retry-After` in whole seconds, when the header carried one.
    pub retry_after_secs: Option<u64>,
    pub body: String,
}

/// Sends one request. `Err` means no HTTP response was obtained at all.
pub trait Transport: Send + Sync {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, String>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent }
    }
}

impl Transport for UreqTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, String> {
        let mut builder = self.agent.post(&request.url);
        for (k, v) in &request.headers {
            builder = builder.header(k, v);
        }
        let mut response = builder.send(request.body.as_str()).map_err(|e| e.to_string())?;
        let status = response.status().as_u16();
        let retry_after_secs = response
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse().ok());
        let body = response.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, retry_after_secs, body })
    }
}

fn endpoint(base: &str, path: &str) -> String {
    format!("{}/{path}", base.trim_end_matches('/'))
}

pub fn build_request(config: &ProviderConfig, prompt: &RenderedPrompt, secret: Option<&str>) -> HttpRequest {
    let mut headers = vec![("content-type".to_string(), "application/json".to_string())];
    let (url, body) = match config.provider {
        ProviderKind::AnthropicCompatible => {
            if let Some(key) = secret {
                headers.push(("x-api-key".into(), key.into()));
            }
            headers.push(("anthropic-version".into(), ANTHROPIC_VERSION.into()));
            let body = json!({
                "model": config.model_id,
                "system": prompt.system_text,
                "messages": [{"role": "user", "content": prompt.user_text}],
                "temperature": config.temperature,
                "max_tokens": config.max_output_tokens,
            });
            (endpoint(&config.base_url, "messages"), body)
        }
        _ => {
            if let Some(key) = secret {
                headers.push(("authorization".into(), format!("Bearer {key}")));
            }
            let body = json!({
                "model": config.model_id,
                "messages": [
                    {"role": "system", "content": prompt.system_text},
                    {"role": "user", "content": prompt.user_text},
                ],
                "temperature": config.temperature,
                "max_tokens": config.max_output_tokens,
            });
            (endpoint(&config.base_url, "chat/completions"), body)
        }
    };
    HttpRequest { url, headers, body: body.to_string() }
}

/// Pulls `(text, model)` out of a successful response body.
pub fn extract_reply(kind: ProviderKind, body: &str) -> Result<(String, Option<String>), String> {
    let v: Value = serde_json::from_str(body).map_err(|e| format!("response is not JSON: {e}"))?;
    let model = v.get("model").and_then(Value::as_str).map(String::from);
    let text = match kind {
        ProviderKind::AnthropicCompatible => {
            let blocks = v.get("content").and_then(Value::as_array).ok_or("response has no `content` array")?;
            let parts: Vec<&str> = blocks
                .iter()
                .filter(|b| b.get("type").and_then(Value::as_str) == Some("text"))
                .filter_map(|b| b.get("text").and_then(Value::as_str))
                .collect();
            if parts.is_empty() {
                return Err("response has no text content".into());
            }
            parts.concat()
        }
        _ => v
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or("response has no `choices[0].message.content`")?
            .to_string(),
    };
    Ok((text, model))
}

/// Best-effort human-readable message from an error body.
pub fn error_message(body: &str) -> String {
    let from_json = serde_json::from_str::<Value>(body).ok().and_then(|v| {
        let e = v.get("error")?;
        e.get("message").and_then(Value::as_str).or_else(|| e.as_str()).map(String::from)
    });
    from_json.unwrap_or_else(|| body.chars().take(300).collect())
}
