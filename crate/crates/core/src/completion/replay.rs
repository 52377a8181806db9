use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{prompt_hash, CompletionBackend, CompletionError, CompletionRequest, CompletionResult};

pub const REPLAY_BACKEND_ID: &str = "replay";

/// One recorded completion. The file format is a JSON array of these.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub prompt_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_text: Option<String>,
    pub completion_text: String,
}

impl ReplayRecord {
    pub fn new(prompt: &str, completion_text: impl Into<String>) -> Self {
        Self {
            prompt_hash: prompt_hash(prompt),
            prompt_text: Some(prompt.to_string()),
            completion_text: completion_text.into(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    by_hash: HashMap<String, String>,
}

impl ReplayBackend {
    /// Later records win when two share a hash.
    pub fn from_records(records: impl IntoIterator<Item = ReplayRecord>) -> Self {
        let by_hash = records
            .into_iter()
            .map(|r| (r.prompt_hash.to_ascii_lowercase(), r.completion_text))
            .collect();
        Self { by_hash }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CompletionError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CompletionError::Config(format!("{}: {e}", path.display())))?;
        let records: Vec<ReplayRecord> = serde_json::from_str(&text)
            .map_err(|e| CompletionError::Config(format!("{}: {e}", path.display())))?;
        Ok(Self::from_records(records))
    }

    pub fn len(&self) -> usize {
        self.by_hash.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_hash.is_empty()
    }
}

#[async_trait]
impl CompletionBackend for ReplayBackend {
    fn id(&self) -> &str {
        REPLAY_BACKEND_ID
    }

    async fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, CompletionError> {
        let start = Instant::now();
        let hash = prompt_hash(&request.prompt);
        let text = self
            .by_hash
            .get(&hash)
            .filter(|t| !t.is_empty())
            .ok_or(CompletionError::ReplayMiss { hash })?;
        Ok(CompletionResult {
            text: text.clone(),
            backend_id: REPLAY_BACKEND_ID.into(),
            latency: start.elapsed(),
        })
    }
}
