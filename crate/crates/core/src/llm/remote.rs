use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatRequest, ChatResponse, FinishReason, LlmError, LlmProvider, Usage};
use crate::http::{self, Transport};
use crate::retry::RetryPolicy;

pub const LLM_API_KEY_ENV: &str = "MEDCODER_LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteLlmConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    120
}

/// `POST {base_url}/chat/completions` client.
pub struct RemoteProvider {
    config: RemoteLlmConfig,
    api_key: Option<String>,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

impl std::fmt::Debug for RemoteProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteProvider")
            .field("config", &self.config)
            .field("has_api_key", &self.api_key.is_some())
            .field("retry", &self.retry)
            .finish()
    }
}

impl RemoteProvider {
    /// Reads the bearer token from `MEDCODER_LLM_API_KEY` when set.
    pub fn new(config: RemoteLlmConfig) -> Self {
        let key = std::env::var(LLM_API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::with_api_key(config, key)
    }

    pub fn with_api_key(config: RemoteLlmConfig, api_key: Option<String>) -> Self {
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

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn body(&self, request: &ChatRequest) -> Value {
        let model = if request.model.is_empty() {
            &self.config.model
        } else {
            &request.model
        };
        json!({
            "model": model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        })
    }

    fn attempt(&self, body: &Value) -> Result<ChatResponse, LlmError> {
        let (status, text) =
            http::post_json(&self.agent, &self.endpoint(), self.api_key.as_deref(), body).map_err(|t| match t {
                Transport::Timeout => LlmError::Timeout,
                Transport::Failed(msg) => LlmError::Unavailable(msg),
            })?;
        match status {
            200..=299 => parse_chat_response(&text),
            408 => Err(LlmError::Timeout),
            429 => Err(LlmError::RateLimited),
            500..=599 => Err(LlmError::Unavailable(format!("HTTP {status}"))),
            _ => Err(LlmError::InvalidRequest(format!("HTTP {status}: {text}"))),
        }
    }
}

/// Parses the first choice of a chat-completions response body.
pub(crate) fn parse_chat_response(text: &str) -> Result<ChatResponse, LlmError> {
    let v: Value = serde_json::from_str(text).map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
    let choice = v
        .get("choices")
        .and_then(Value::as_array)
        .and_then(|c| c.first())
        .ok_or_else(|| LlmError::MalformedResponse("missing choices".into()))?;
    let finish_reason = FinishReason::parse(choice.get("finish_reason").and_then(Value::as_str));
    let content = choice.get("message").and_then(|m| m.get("content"));
    let text = match content {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Null) | None
            if matches!(finish_reason, FinishReason::Length | FinishReason::ContentFilter) =>
        {
            String::new()
        }
        _ => return Err(LlmError::MalformedResponse("missing message content".into())),
    };
    let usage = v
        .get("usage")
        .map(|u| Usage {
            prompt_tokens: u.get("prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
            completion_tokens: u.get("completion_tokens").and_then(Value::as_u64).unwrap_or(0),
        })
        .unwrap_or_default();
    Ok(ChatResponse {
        text,
        finish_reason,
        usage,
    })
}

impl LlmProvider for RemoteProvider {
    fn id(&self) -> String {
        format!("remote:{}", self.config.model)
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let body = self.body(request);
        self.retry.run(|_| self.attempt(&body), LlmError::is_transient)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_first_choice() {
        let r = parse_chat_response(
            r#"{"choices":[{"message":{"content":"[1] > [2]"},"finish_reason":"stop"}],"usage":{"prompt_tokens":10,"completion_tokens":3}}"#,
        )
        .unwrap();
        assert_eq!(r.text, "[1] > [2]");
        assert_eq!(r.finish_reason, FinishReason::Stop);
        assert_eq!(r.usage.completion_tokens, 3);
    }

    #[test]
    fn missing_choices_is_malformed() {
        assert!(matches!(
            parse_chat_response(r#"{"id":"x"}"#),
            Err(LlmError::MalformedResponse(_))
        ));
        assert!(matches!(parse_chat_response("not json"), Err(LlmError::MalformedResponse(_))));
    }

    #[test]
    fn empty_content_only_for_truncation() {
        let ok = parse_chat_response(r#"{"choices":[{"message":{"content":null},"finish_reason":"length"}]}"#).unwrap();
        assert_eq!(ok.text, "");
        assert!(parse_chat_response(r#"{"choices":[{"message":{},"finish_reason":"stop"}]}"#).is_err());
    }
}
