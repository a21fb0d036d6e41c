use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::Rng;
use themeloom_core::RenderedPrompt;

use crate::cache::{CacheEntry, CacheKey, ResponseCache};
use crate::config::{ProviderConfig, ProviderKind};
use crate::transport::{build_request, error_message, extract_reply, Transport, UreqTransport};
use crate::{mock, GatewayError, RawResponse};

pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

type CredentialLookup = dyn Fn(&str) -> Option<String> + Send + Sync;

/// Blocking, thread-safe client for one provider configuration.
pub struct Gateway {
    config: ProviderConfig,
    transport: Arc<dyn Transport>,
    cache: Option<Arc<ResponseCache>>,
    sleeper: Arc<dyn Sleeper>,
    credentials: Arc<CredentialLookup>,
    provider_calls: AtomicU64,
}

impl Gateway {
    pub fn new(config: ProviderConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let timeout = Duration::from_secs(config.request_timeout_secs.max(1));
        Ok(Self {
            config,
            transport: Arc::new(UreqTransport::new(timeout)),
            cache: None,
            sleeper: Arc::new(ThreadSleeper),
            credentials: Arc::new(|name| std::env::var(name).ok().filter(|v| !v.is_empty())),
            provider_calls: AtomicU64::new(0),
        })
    }

    pub fn with_cache(mut self, cache: Arc<ResponseCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_transport(mut self, transport: Arc<dyn Transport>) -> Self {
        self.transport = transport;
        self
    }

    pub fn with_sleeper(mut self, sleeper: Arc<dyn Sleeper>) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn with_credentials(mut self, lookup: impl Fn(&str) -> Option<String> + Send + Sync + 'static) -> Self {
        self.credentials = Arc::new(lookup);
        self
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    pub fn cache(&self) -> Option<&ResponseCache> {
        self.cache.as_deref()
    }

    /// Requests that reached the provider (HTTP attempts or mock invocations).
    pub fn provider_calls(&self) -> u64 {
        self.provider_calls.load(Ordering::SeqCst)
    }

    pub fn cache_key(&self, prompt: &RenderedPrompt) -> CacheKey {
        CacheKey::new(&prompt.content_hash, &self.config.cache_model_id(), self.config.temperature)
    }

    pub fn complete(&self, prompt: &RenderedPrompt) -> Result<RawResponse, GatewayError> {
        let Some(cache) = &self.cache else {
            return self.call(prompt);
        };
        let key = self.cache_key(prompt);
        let lock = cache.lock(&key);
        let _held = lock.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(hit) = cache.get(&key)? {
            return Ok(RawResponse { text: hit.text, provider_echo: hit.provider_echo, latency_ms: 0, from_cache: true });
        }
        let fresh = self.call(prompt)?;
        cache.put(&CacheEntry {
            key,
            content_hash: prompt.content_hash.clone(),
            model_id: self.config.cache_model_id(),
            temperature: self.config.temperature,
            provider_echo: fresh.provider_echo.clone(),
            text: fresh.text.clone(),
        })?;
        Ok(fresh)
    }

    /// Completes every prompt with at most `max_in_flight` outstanding.
    /// Results are positional; one failure does not abort the rest.
    pub fn complete_batch(
        &self,
        prompts: &[RenderedPrompt],
    ) -> Result<Vec<Result<RawResponse, GatewayError>>, GatewayError> {
        if prompts.is_empty() {
            return Err(GatewayError::EmptyBatch);
        }
        let slots: Vec<Mutex<Option<Result<RawResponse, GatewayError>>>> =
            prompts.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.config.max_in_flight.min(prompts.len());
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(prompt) = prompts.get(i) else { break };
                    let result = self.complete(prompt);
                    *slots[i].lock().unwrap_or_else(|p| p.into_inner()) = Some(result);
                });
            }
        });
        Ok(slots
            .into_iter()
            .map(|m| m.into_inner().unwrap_or_else(|p| p.into_inner()).expect("every slot is filled"))
            .collect())
    }

    fn call(&self, prompt: &RenderedPrompt) -> Result<RawResponse, GatewayError> {
        if self.config.provider == ProviderKind::Mock {
            self.provider_calls.fetch_add(1, Ordering::SeqCst);
            let mut r = mock::respond(&self.config.mock, prompt);
            r.provider_echo = self.config.model_id.clone();
            return Ok(r);
        }
        let secret = match self.config.credential_ref.as_deref().filter(|c| !c.trim().is_empty()) {
            Some(var) => {
                Some((self.credentials)(var).ok_or_else(|| GatewayError::MissingCredential { variable: var.to_string() })?)
            }
            None => None,
        };
        let request = build_request(&self.config, prompt, secret.as_deref());
        let policy = &self.config.retry;
        let started = Instant::now();
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            self.provider_calls.fetch_add(1, Ordering::SeqCst);
            let retries_left = attempts <= policy.max_retries;
            let backoff = || policy.delay(attempts - 1, rand::rng().random::<f64>());
            match self.transport.send(&request) {
                Ok(resp) if (200..300).contains(&resp.status) => {
                    let (text, model) = extract_reply(self.config.provider, &resp.body)
                        .map_err(|message| GatewayError::Provider { status: resp.status, message })?;
                    return Ok(RawResponse {
                        text,
                        provider_echo: model.unwrap_or_else(|| self.config.model_id.clone()),
                        latency_ms: started.elapsed().as_millis() as u64,
                        from_cache: false,
                    });
                }
                Ok(resp) if resp.status == 401 || resp.status == 403 => {
                    return Err(GatewayError::Unauthorized { status: resp.status, message: error_message(&resp.body) });
                }
                Ok(resp) if resp.status == 429 => {
                    if !retries_left {
                        return Err(GatewayError::RateLimited { attempts, retry_after_secs: resp.retry_after_secs });
                    }
                    let wait = resp.retry_after_secs.map(Duration::from_secs).unwrap_or_else(backoff);
                    self.sleeper.sleep(wait);
                }
                Ok(resp) if resp.status >= 500 && retries_left => self.sleeper.sleep(backoff()),
                Ok(resp) => {
                    return Err(GatewayError::Provider { status: resp.status, message: error_message(&resp.body) });
                }
                Err(_) if retries_left => self.sleeper.sleep(backoff()),
                Err(message) => return Err(GatewayError::Network { attempts, message }),
            }
        }
    }
}
