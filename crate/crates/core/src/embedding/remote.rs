use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{EmbeddingError, EmbeddingProvider};
use crate::http::{self, Transport};
use crate::retry::RetryPolicy;

pub const EMBED_API_KEY_ENV: &str = "MEDCODER_EMBED_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteEmbedderConfig {
    pub url: String,
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    30
}

#[derive(Deserialize)]
struct Response {
    data: Vec<Datum>,
}

#[derive(Deserialize)]
struct Datum {
    index: usize,
    embedding: Vec<f32>,
}

/// Client for `POST {url}` with `{"model", "input": [..]}` bodies.
pub struct RemoteEmbedder {
    config: RemoteEmbedderConfig,
    api_key: Option<String>,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

impl std::fmt::Debug for RemoteEmbedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteEmbedder")
            .field("config", &self.config)
            .field("has_api_key", &self.api_key.is_some())
            .finish()
    }
}

#[derive(Debug)]
enum Attempt {
    Retryable(String),
    Fatal(EmbeddingError),
}

impl RemoteEmbedder {
    /// Reads the bearer token from `MEDCODER_EMBED_API_KEY` when set.
    pub fn new(config: RemoteEmbedderConfig) -> Self {
        let api_key = std::env::var(EMBED_API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::with_api_key(config, api_key)
    }

    pub fn with_api_key(config: RemoteEmbedderConfig, api_key: Option<String>) -> Self {
        let agent = http::agent(Duration::from_secs(config.timeout_secs));
        Self {
            config,
            api_key,
            retry: RetryPolicy::default(),
            agent,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn attempt(&self, body: &serde_json::Value, n: usize) -> Result<Vec<Vec<f32>>, Attempt> {
        let (status, text) = http::post_json(&self.agent, &self.config.url, self.api_key.as_deref(), body)
            .map_err(|t| match t {
                Transport::Timeout => Attempt::Retryable("timeout".into()),
                Transport::Failed(msg) => Attempt::Retryable(msg),
            })?;
        match status {
            200..=299 => {}
            429 | 500..=599 => return Err(Attempt::Retryable(format!("HTTP {status}"))),
            _ => {
                return Err(Attempt::Fatal(EmbeddingError::ProviderUnavailable(format!(
                    "HTTP {status}: {text}"
                ))))
            }
        }
        let parsed: Response = serde_json::from_str(&text)
            .map_err(|e| Attempt::Fatal(EmbeddingError::MalformedResponse(e.to_string())))?;
        let mut out: Vec<Option<Vec<f32>>> = vec![None; n];
        for d in parsed.data {
            let slot = out.get_mut(d.index).ok_or_else(|| {
                Attempt::Fatal(EmbeddingError::MalformedResponse(format!("index {} out of range", d.index)))
            })?;
            *slot = Some(d.embedding);
        }
        out.into_iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| Attempt::Fatal(EmbeddingError::MalformedResponse(format!("missing index {i}"))))
            })
            .collect()
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn id(&self) -> String {
        format!("remote:{}", self.config.model)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbeddingError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let body = json!({ "model": self.config.model, "input": texts });
        self.retry
            .run(|_| self.attempt(&body, texts.len()), |e| matches!(e, Attempt::Retryable(_)))
            .map_err(|e| match e {
                Attempt::Retryable(msg) => EmbeddingError::ProviderUnavailable(msg),
                Attempt::Fatal(err) => err,
            })
    }
}
