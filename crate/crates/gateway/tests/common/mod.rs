#![allow(dead_code)]

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use themeloom_core::prompting::build_theme_generation_prompt;
use themeloom_core::{fixtures, RenderedPrompt};
use themeloom_gateway::transport::{HttpRequest, HttpResponse, Transport};
use themeloom_gateway::Sleeper;

pub fn ok_body(text: &str) -> String {
    serde_json::json!({"model": "echo-1", "choices": [{"message": {"content": text}}]}).to_string()
}

pub fn reply(status: u16, body: &str) -> Result<HttpResponse, String> {
    Ok(HttpResponse { status, retry_after_secs: None, body: body.to_string() })
}

/// Plays back a fixed script, one entry per request.
pub struct Scripted {
    script: Mutex<VecDeque<Result<HttpResponse, String>>>,
    pub seen: Mutex<Vec<HttpRequest>>,
}

impl Scripted {
    pub fn new(script: Vec<Result<HttpResponse, String>>) -> Arc<Self> {
        Arc::new(Self { script: Mutex::new(script.into()), seen: Mutex::new(Vec::new()) })
    }
}

impl Transport for Scripted {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, String> {
        self.seen.lock().unwrap().push(request.clone());
        self.script.lock().unwrap().pop_front().expect("script exhausted")
    }
}

#[derive(Default)]
pub struct RecordingSleeper {
    pub waits: Mutex<Vec<Duration>>,
}

impl Sleeper for RecordingSleeper {
    fn sleep(&self, d: Duration) {
        self.waits.lock().unwrap().push(d);
    }
}

/// Echoes a digest of the request after a pseudo-random delay, tracking how
/// many requests are outstanding at once.
pub struct Jittery {
    pub in_flight: AtomicUsize,
    pub peak: AtomicUsize,
    pub calls: AtomicUsize,
    pub fail_if_contains: Option<String>,
}

impl Jittery {
    pub fn new(fail_if_contains: Option<&str>) -> Arc<Self> {
        Arc::new(Self {
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
            calls: AtomicUsize::new(0),
            fail_if_contains: fail_if_contains.map(String::from),
        })
    }
}

pub fn digest(body: &str) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(body.as_bytes()))
}

impl Transport for Jittery {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, String> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        let n = self.calls.fetch_add(1, Ordering::SeqCst) as u64;
        let d = digest(&request.body);
        let delay = (u64::from_str_radix(&d[..4], 16).unwrap() ^ n.wrapping_mul(7919)) % 25;
        std::thread::sleep(Duration::from_millis(delay));
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        if self.fail_if_contains.as_deref().is_some_and(|s| request.body.contains(s)) {
            return reply(401, r#"{"error":{"message":"invalid key"}}"#);
        }
        reply(200, &ok_body(&d))
    }
}

pub fn prompts(n: usize) -> Vec<RenderedPrompt> {
    let corpus = fixtures::corpus();
    (0..n).map(|i| build_theme_generation_prompt(&corpus, &format!("guidance number {i}")).unwrap()).collect()
}
