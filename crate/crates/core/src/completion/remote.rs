use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde_json::{json, Value};
use tokio::sync::Semaphore;
use url::Url;

use super::{CompletionBackend, CompletionError, CompletionRequest, CompletionResult};

pub const REMOTE_BACKEND_ID: &str = "remote";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    /// Full URL of the completions endpoint, e.g. `https://host/v1/completions`.
    pub endpoint: Url,
    pub api_key: Option<String>,
    pub model: Option<String>,
    pub timeout: Duration,
    pub max_in_flight: usize,
    /// Extra attempts after a timeout, transport error or 5xx; capped at 1.
    pub retries: u8,
}

impl RemoteConfig {
    pub fn new(endpoint: Url) -> Self {
        Self {
            endpoint,
            api_key: None,
            model: None,
            timeout: DEFAULT_TIMEOUT,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            retries: 0,
        }
    }

    /// Reads `LLM_ENDPOINT_URL`, `LLM_API_KEY`, `LLM_MODEL` and
    /// `LLM_TIMEOUT_SECONDS` from the process environment.
    pub fn from_env() -> Result<Self, CompletionError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, CompletionError> {
        let raw = lookup("LLM_ENDPOINT_URL")
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| CompletionError::Config("LLM_ENDPOINT_URL is not set".into()))?;
        let endpoint = Url::parse(raw.trim())
            .map_err(|e| CompletionError::Config(format!("LLM_ENDPOINT_URL: {e}")))?;
        let mut cfg = Self::new(endpoint);
        cfg.api_key = lookup("LLM_API_KEY").filter(|s| !s.is_empty());
        cfg.model = lookup("LLM_MODEL").filter(|s| !s.is_empty());
        if let Some(secs) = lookup("LLM_TIMEOUT_SECONDS") {
            let secs: f64 = secs
                .trim()
                .parse()
                .ok()
                .filter(|s: &f64| s.is_finite() && *s > 0.0)
                .ok_or_else(|| {
                    CompletionError::Config(format!("LLM_TIMEOUT_SECONDS: invalid value {secs:?}"))
                })?;
            cfg.timeout = Duration::from_secs_f64(secs);
        }
        Ok(cfg)
    }
}

/// Client for an OpenAI-compatible text-completions endpoint.
#[derive(Debug)]
pub struct RemoteBackend {
    config: RemoteConfig,
    client: reqwest::Client,
    in_flight: Semaphore,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, CompletionError> {
        let client = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| CompletionError::Config(e.to_string()))?;
        let in_flight = Semaphore::new(config.max_in_flight.max(1));
        Ok(Self {
            config,
            client,
            in_flight,
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    async fn attempt(&self, request: &CompletionRequest) -> Result<String, CompletionError> {
        let mut body = json!({
            "prompt": request.prompt,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        if let Some(model) = &self.config.model {
            body["model"] = Value::String(model.clone());
        }
        let mut req = self.client.post(self.config.endpoint.clone()).json(&body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().await.map_err(|e| self.classify(e))?;
        let status = resp.status();
        let text = resp.text().await.map_err(|e| self.classify(e))?;
        if !status.is_success() {
            return Err(CompletionError::Status {
                code: status.as_u16(),
                body: text.chars().take(200).collect(),
            });
        }
        let value: Value =
            serde_json::from_str(&text).map_err(|e| CompletionError::Malformed(e.to_string()))?;
        match value.pointer("/choices/0/text").and_then(Value::as_str) {
            Some(t) if !t.is_empty() => Ok(t.to_string()),
            Some(_) => Err(CompletionError::Malformed("empty completion text".into())),
            None => Err(CompletionError::Malformed("missing choices[0].text".into())),
        }
    }

    fn classify(&self, e: reqwest::Error) -> CompletionError {
        if e.is_timeout() {
            CompletionError::Timeout(self.config.timeout)
        } else {
            CompletionError::Transport(e.to_string())
        }
    }
}

fn retryable(e: &CompletionError) -> bool {
    match e {
        CompletionError::Timeout(_) | CompletionError::Transport(_) => true,
        CompletionError::Status { code, .. } => *code >= 500,
        _ => false,
    }
}

#[async_trait]
impl CompletionBackend for RemoteBackend {
    fn id(&self) -> &str {
        REMOTE_BACKEND_ID
    }

    async fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, CompletionError> {
        request.check()?;
        let _permit = self
            .in_flight
            .acquire()
            .await
            .map_err(|e| CompletionError::Transport(e.to_string()))?;
        let start = Instant::now();
        let mut result = self.attempt(request).await;
        for _ in 0..self.config.retries.min(1) {
            match &result {
                Err(e) if retryable(e) => {
                    tracing::warn!(error = %e, "retrying completion request");
                    result = self.attempt(request).await;
                }
                _ => break,
            }
        }
        Ok(CompletionResult {
            text: result?,
            backend_id: REMOTE_BACKEND_ID.into(),
            latency: start.elapsed(),
        })
    }
}
