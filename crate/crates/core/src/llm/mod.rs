//! Chat-completion provider abstraction.
//!
//! Every pipeline stage talks to an [`LlmProvider`]. The remote provider speaks
//! the OpenAI-style `/chat/completions` wire format; [`MockProvider`] replays
//! responses keyed by the SHA-256 of the canonicalized messages, which makes
//! whole pipeline runs reproducible offline.

mod cache;
mod mock;
mod remote;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CachedProvider, ConcurrencyLimited};
pub use mock::{FixtureEntry, FixtureSet, FnProvider, MockProvider, RecordingProvider};
pub use remote::{RemoteLlmConfig, RemoteProvider, LLM_API_KEY_ENV};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no fixture for request hash {0}")]
    FixtureMiss(String),
    #[error("provider timed out")]
    Timeout,
    #[error("provider rate limited")]
    RateLimited,
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("fixture file: {0}")]
    Fixture(String),
}

impl LlmError {
    pub fn is_transient(&self) -> bool {
        matches!(self, Self::Timeout | Self::RateLimited | Self::Unavailable(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub model: String,
}

impl ChatRequest {
    /// Temperature 0, default output budget.
    pub fn new(model: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        Self {
            messages,
            temperature: 0.0,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            model: model.into(),
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if !self.messages.iter().any(|m| m.role == Role::User) {
            return Err(LlmError::InvalidRequest("at least one user message is required".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(LlmError::InvalidRequest("temperature must be >= 0".into()));
        }
        if self.max_output_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_output_tokens must be positive".into()));
        }
        Ok(())
    }

    pub fn last_user_message(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }

    /// Hex SHA-256 of [`canonical_messages`].
    pub fn request_hash(&self) -> String {
        hex_sha256(canonical_messages(&self.messages).as_bytes())
    }
}

/// Compact JSON of the messages with object keys in sorted order.
pub fn canonical_messages(messages: &[ChatMessage]) -> String {
    let value = serde_json::to_value(messages).expect("messages serialize");
    // serde_json::Map is a BTreeMap here, so keys come out sorted.
    serde_json::to_string(&value).expect("value serializes")
}

pub fn hex_sha256(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    ContentFilter,
    Other,
}

impl FinishReason {
    pub fn parse(s: Option<&str>) -> Self {
        match s {
            Some("stop") | None => Self::Stop,
            Some("length") => Self::Length,
            Some("content_filter") => Self::ContentFilter,
            Some(_) => Self::Other,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub finish_reason: FinishReason,
    pub usage: Usage,
}

impl ChatResponse {
    pub fn stop(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            finish_reason: FinishReason::Stop,
            usage: Usage::default(),
        }
    }
}

/// Implementations must tolerate concurrent `complete` calls.
pub trait LlmProvider: Send + Sync {
    fn id(&self) -> String;

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError>;
}

impl<P: LlmProvider + ?Sized> LlmProvider for std::sync::Arc<P> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        (**self).complete(request)
    }
}

impl<P: LlmProvider + ?Sized> LlmProvider for &P {
    fn id(&self) -> String {
        (**self).id()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        (**self).complete(request)
    }
}

/// Validates the request, then delegates to the provider.
pub fn complete(request: &ChatRequest, provider: &dyn LlmProvider) -> Result<ChatResponse, LlmError> {
    request.validate()?;
    provider.complete(request)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(content: &str) -> ChatRequest {
        ChatRequest::new("m", vec![ChatMessage::system("sys"), ChatMessage::user(content)])
    }

    #[test]
    fn hash_ignores_json_key_order() {
        let a: Vec<ChatMessage> = serde_json::from_str(r#"[{"role":"user","content":"hi"}]"#).unwrap();
        let b: Vec<ChatMessage> = serde_json::from_str(r#"[{"content":"hi","role":"user"}]"#).unwrap();
        assert_eq!(canonical_messages(&a), canonical_messages(&b));
        assert_eq!(canonical_messages(&a), r#"[{"content":"hi","role":"user"}]"#);
    }

    #[test]
    fn hash_tracks_content() {
        assert_eq!(req("x").request_hash(), req("x").request_hash());
        assert_ne!(req("x").request_hash(), req("y").request_hash());
        assert_eq!(req("x").request_hash().len(), 64);
    }

    #[test]
    fn sha256_reference() {
        assert_eq!(
            hex_sha256(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn validation() {
        let only_system = ChatRequest::new("m", vec![ChatMessage::system("s")]);
        assert!(matches!(only_system.validate(), Err(LlmError::InvalidRequest(_))));
        let mut hot = req("x");
        hot.temperature = -1.0;
        assert!(hot.validate().is_err());
        assert!(req("x").validate().is_ok());
    }
}
