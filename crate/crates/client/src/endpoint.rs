use crate::cache::{CacheKey, CachedResponse, ResponseCache};
use crate::config::{ConfigError, EndpointConfig};
use serde_json::{json, Value};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;
use thiserror::Error;
use toolpref_core::{ChatError, ChatModel, Completion, Message};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("environment variable {0} is not set")]
    AuthMissing(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{model_id}: gave up after {attempts} attempts: {last_error}")]
    EndpointExhausted {
        model_id: String,
        attempts: u32,
        last_error: String,
    },
    #[error("{model_id}: HTTP {status}: {body}")]
    Rejected { model_id: String, status: u16, body: String },
    #[error("{model_id}: malformed response: {detail}")]
    Malformed { model_id: String, detail: String },
    #[error("building HTTP client: {0}")]
    Build(#[from] reqwest::Error),
}

struct Gate {
    in_use: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_use.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_use.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

enum Attempt {
    Done(CachedResponse),
    Retry(String),
    Fatal(ClientError),
}

/// One chat-completions endpoint. Safe to share across threads.
pub struct Endpoint {
    config: EndpointConfig,
    url: String,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
    cache: Option<ResponseCache>,
    gate: Gate,
    network_requests: AtomicU64,
}

impl Endpoint {
    pub fn new(config: EndpointConfig, cache: Option<ResponseCache>) -> Result<Self, ClientError> {
        config.validate()?;
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| ClientError::AuthMissing(var.clone()))?),
            None => None,
        };
        let http = reqwest::blocking::Client::builder().timeout(config.timeout()).build()?;
        Ok(Self {
            url: format!("{}/chat/completions", config.base_url.trim_end_matches('/')),
            api_key,
            http,
            cache,
            gate: Gate {
                in_use: Mutex::new(0),
                freed: Condvar::new(),
                limit: config.max_in_flight,
            },
            network_requests: AtomicU64::new(0),
            config,
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    /// HTTP requests sent so far, retries included.
    pub fn network_requests(&self) -> u64 {
        self.network_requests.load(Ordering::SeqCst)
    }

    pub fn request_body(&self, messages: &[Message]) -> Value {
        let s = &self.config.sampling;
        let mut body = json!({
            "model": self.config.wire_model(),
            "messages": messages,
            "temperature": s.temperature,
            "top_p": s.top_p,
            "max_tokens": s.max_tokens,
            "n": 1,
        });
        if s.top_k != -1 {
            body["top_k"] = json!(s.top_k);
        }
        body
    }

    pub fn complete_cached(&self, messages: &[Message], sample_index: u32) -> Result<CachedResponse, ClientError> {
        let key = CacheKey::new(&self.config.model_id, messages, &self.config.sampling, sample_index);
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            return Ok(hit);
        }
        let response = self.fetch(messages)?;
        if let Some(cache) = &self.cache {
            if let Err(e) = cache.put(&key, &response) {
                tracing::warn!(model = %self.config.model_id, error = %e, "cache write failed");
            }
        }
        Ok(response)
    }

    fn fetch(&self, messages: &[Message]) -> Result<CachedResponse, ClientError> {
        let body = self.request_body(messages);
        let attempts = self.config.max_retries + 1;
        let mut last_error = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.config.backoff_base_ms.saturating_mul(1 << (attempt - 1).min(16));
                tracing::debug!(model = %self.config.model_id, attempt, delay_ms = delay, "retrying");
                std::thread::sleep(Duration::from_millis(delay));
            }
            let outcome = {
                let _permit = self.gate.acquire();
                self.network_requests.fetch_add(1, Ordering::SeqCst);
                self.attempt(&body)
            };
            match outcome {
                Attempt::Done(r) => return Ok(r),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(e) => last_error = e,
            }
        }
        Err(ClientError::EndpointExhausted {
            model_id: self.config.model_id.clone(),
            attempts,
            last_error,
        })
    }

    fn attempt(&self, body: &Value) -> Attempt {
        let mut request = self.http.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = match request.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = response.status().as_u16();
        let text = match response.text() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        if status == 408 || status == 429 || (500..600).contains(&status) {
            return Attempt::Retry(format!("HTTP {status}"));
        }
        if !(200..300).contains(&status) {
            return Attempt::Fatal(ClientError::Rejected {
                model_id: self.config.model_id.clone(),
                status,
                body: text.chars().take(500).collect(),
            });
        }
        match parse_completion(&text) {
            Ok((content, output_tokens)) => Attempt::Done(CachedResponse {
                model_id: self.config.model_id.clone(),
                content,
                output_tokens,
            }),
            Err(detail) => Attempt::Fatal(ClientError::Malformed {
                model_id: self.config.model_id.clone(),
                detail,
            }),
        }
    }
}

fn parse_completion(text: &str) -> Result<(String, Option<u64>), String> {
    let v: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let content = v
        .pointer("/choices/0/message/content")
        .ok_or("missing choices[0].message.content")?;
    let content = match content {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => return Err(format!("content is not a string: {other}")),
    };
    Ok((content, v.pointer("/usage/completion_tokens").and_then(Value::as_u64)))
}

impl ChatModel for Endpoint {
    fn model_id(&self) -> &str {
        &self.config.model_id
    }

    fn complete(&self, messages: &[Message], sample_index: u32) -> Result<Completion, ChatError> {
        self.complete_cached(messages, sample_index)
            .map(|r| Completion {
                content: r.content,
                output_tokens: r.output_tokens,
            })
            .map_err(|e| ChatError {
                model_id: self.config.model_id.clone(),
                message: e.to_string(),
            })
    }
}
