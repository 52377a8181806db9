//! Text-completion backends behind one async interface.
//!
//! * [`ReplayBackend`] answers from recorded completions keyed by prompt hash.
//! * [`OracleBackend`] plans with the breadth-first planner and writes the
//!   answer in the agents' output format.
//! * [`RemoteBackend`] calls an OpenAI-compatible text-completions endpoint.

use std::time::Duration;

use async_trait::async_trait;
use sha2::{Digest, Sha256};

mod oracle;
mod remote;
mod replay;
pub mod stub;

pub use oracle::{render_manager_output, render_transport_output, OracleBackend, ORACLE_BACKEND_ID};
pub use remote::{RemoteBackend, RemoteConfig, REMOTE_BACKEND_ID};
pub use replay::{ReplayBackend, ReplayRecord, REPLAY_BACKEND_ID};

pub const DEFAULT_MAX_TOKENS: u32 = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f32,
    pub max_tokens: u32,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    pub fn with_temperature(mut self, temperature: f32) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    fn check(&self) -> Result<(), CompletionError> {
        if !(0.0..=1.0).contains(&self.temperature) {
            return Err(CompletionError::InvalidRequest(format!(
                "temperature {} outside [0, 1]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(CompletionError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    pub text: String,
    pub backend_id: String,
    pub latency: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CompletionError {
    #[error("replay miss for prompt {hash}")]
    ReplayMiss { hash: String },
    #[error("remote timeout after {0:?}")]
    Timeout(Duration),
    #[error("remote returned status {code}: {body}")]
    Status { code: u16, body: String },
    #[error("malformed completion response: {0}")]
    Malformed(String),
    #[error("remote transport error: {0}")]
    Transport(String),
    #[error("oracle: {0}")]
    Oracle(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

#[async_trait]
pub trait CompletionBackend: Send + Sync {
    fn id(&self) -> &str;

    async fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, CompletionError>;
}

/// Lowercase hex SHA-256 of the full prompt text.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_sha256_hex() {
        assert_eq!(
            prompt_hash(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_ne!(prompt_hash("a"), prompt_hash("a "));
    }

    #[test]
    fn request_defaults_and_bounds() {
        let r = CompletionRequest::new("p");
        assert_eq!(r.temperature, 0.0);
        assert!(r.check().is_ok());
        assert!(r.clone().with_temperature(1.5).check().is_err());
        assert!(r.with_max_tokens(0).check().is_err());
    }
}
