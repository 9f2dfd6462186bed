//! Chat-completion HTTP backend.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::agent::ChatTurn;
use super::backend::{Backend, BackendError, GenerationRequest};

pub const ENV_BASE_URL: &str = "API_BASE_URL";
pub const ENV_API_KEY: &str = "API_KEY";

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: None,
            max_attempts: 3,
            initial_backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(120),
        }
    }

    /// Reads `API_BASE_URL` (required) and `API_KEY` (optional).
    pub fn from_env() -> Option<Self> {
        let base = std::env::var(ENV_BASE_URL).ok()?;
        let mut cfg = Self::new(base);
        cfg.api_key = std::env::var(ENV_API_KEY).ok();
        Some(cfg)
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    pub fn with_backoff(mut self, initial: Duration) -> Self {
        self.initial_backoff = initial;
        self
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Debug, Serialize, PartialEq)]
pub struct ChatRequestBody<'a> {
    pub model: &'a str,
    pub messages: &'a [ChatTurn],
    pub temperature: f64,
    pub max_tokens: u32,
}

impl<'a> ChatRequestBody<'a> {
    pub fn from_request(request: &'a GenerationRequest) -> Self {
        Self {
            model: &request.model.model_name,
            messages: &request.messages,
            temperature: request.model.decoding.temperature,
            max_tokens: request.model.decoding.max_tokens,
        }
    }
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Debug, Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

/// Output text of the first choice.
pub fn parse_chat_response(body: &str) -> Result<String, BackendError> {
    let parsed: ChatResponse = serde_json::from_str(body)
        .map_err(|e| BackendError::InvalidResponse(format!("{e}: {body}")))?;
    parsed
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| BackendError::InvalidResponse("no choices or empty content".into()))
}

pub struct RemoteBackend {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Transport {
                attempts: 0,
                message: e.to_string(),
            })?;
        Ok(Self { config, client })
    }

    fn attempt(&self, body: &ChatRequestBody<'_>, attempt: u32) -> Result<String, BackendError> {
        let mut req = self.client.post(self.config.endpoint()).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| BackendError::Transport {
            attempts: attempt,
            message: e.to_string(),
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| BackendError::Transport {
            attempts: attempt,
            message: e.to_string(),
        })?;
        if !status.is_success() {
            return Err(BackendError::Http {
                status: status.as_u16(),
                attempts: attempt,
                body: text,
            });
        }
        parse_chat_response(&text)
    }
}

impl Backend for RemoteBackend {
    fn complete(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let body = ChatRequestBody::from_request(request);
        let mut delay = self.config.initial_backoff;
        let mut attempt = 1;
        loop {
            match self.attempt(&body, attempt) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_retryable() && attempt < self.config.max_attempts => {
                    tracing::warn!(attempt, error = %e, "chat completion failed, retrying");
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AgentId, ModelRef};

    #[test]
    fn request_body_carries_decoding() {
        let req = GenerationRequest {
            agent_id: AgentId::new("a"),
            model: ModelRef::remote("gpt-4o-mini"),
            messages: vec![ChatTurn::system("s"), ChatTurn::user("u")],
        };
        let v = serde_json::to_value(ChatRequestBody::from_request(&req)).unwrap();
        assert_eq!(
            v,
            serde_json::json!({
                "model": "gpt-4o-mini",
                "messages": [{"role": "system", "content": "s"}, {"role": "user", "content": "u"}],
                "temperature": 0.0,
                "max_tokens": 1024
            })
        );
    }

    #[test]
    fn parses_first_choice() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"hi"}},{"message":{"content":"no"}}]}"#;
        assert_eq!(parse_chat_response(body).unwrap(), "hi");
        assert!(parse_chat_response(r#"{"choices":[]}"#).is_err());
    }
}
