use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    /// `-1` disables top-k and omits it from the request.
    pub top_k: i64,
    pub max_tokens: u32,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            top_p: 1.0,
            top_k: -1,
            max_tokens: 2048,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub model_id: String,
    /// Base URL; requests go to `{base_url}/chat/completions`.
    pub base_url: String,
    /// Model name sent on the wire; defaults to `model_id`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_model: Option<String>,
    /// Environment variable holding the bearer token, e.g. `OPENAI_API_KEY`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub sampling: SamplingParams,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// Retries after the first attempt.
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub backoff_base_ms: u64,
}

fn default_timeout() -> u64 {
    120
}

fn default_in_flight() -> usize {
    4
}

fn default_retries() -> u32 {
    3
}

fn default_backoff() -> u64 {
    500
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("endpoint {model_id}: {reason}")]
    Invalid { model_id: String, reason: String },
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
}

impl EndpointConfig {
    pub fn new(model_id: impl Into<String>, base_url: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            base_url: base_url.into(),
            request_model: None,
            api_key_env: None,
            sampling: SamplingParams::default(),
            timeout_secs: default_timeout(),
            max_in_flight: default_in_flight(),
            max_retries: default_retries(),
            backoff_base_ms: default_backoff(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |reason: &str| {
            Err(ConfigError::Invalid {
                model_id: self.model_id.clone(),
                reason: reason.to_string(),
            })
        };
        if self.model_id.is_empty() {
            return invalid("model_id is empty");
        }
        if !(self.sampling.temperature >= 0.0) {
            return invalid("temperature must be >= 0");
        }
        if self.sampling.max_tokens == 0 {
            return invalid("max_tokens must be > 0");
        }
        if self.max_in_flight == 0 {
            return invalid("max_in_flight must be > 0");
        }
        Ok(())
    }

    pub fn wire_model(&self) -> &str {
        self.request_model.as_deref().unwrap_or(&self.model_id)
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    /// Reads a JSON array of endpoint configs (or a single object).
    pub fn load_all(path: &Path) -> Result<Vec<EndpointConfig>, ConfigError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: shown.clone(),
            source,
        })?;
        let parse = |source| ConfigError::Parse {
            path: shown.clone(),
            source,
        };
        let value: serde_json::Value = serde_json::from_str(&text).map_err(parse)?;
        let configs = if value.is_array() {
            serde_json::from_value(value).map_err(parse)?
        } else {
            vec![serde_json::from_value(value).map_err(parse)?]
        };
        for c in &configs {
            EndpointConfig::validate(c)?;
        }
        Ok(configs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_validation() {
        let c: EndpointConfig = serde_json::from_str(r#"{"model_id": "m", "base_url": "http://x"}"#).unwrap();
        assert_eq!(c.sampling, SamplingParams::default());
        assert_eq!((c.sampling.temperature, c.sampling.top_p, c.sampling.top_k), (1.0, 1.0, -1));
        assert_eq!(c.max_retries, 3);
        assert!(c.validate().is_ok());
        let mut bad = c.clone();
        bad.sampling.temperature = -0.1;
        assert!(bad.validate().is_err());
        let mut bad = c;
        bad.sampling.max_tokens = 0;
        assert!(bad.validate().is_err());
    }
}
