use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{ChatMessage, LlmError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

#[derive(Debug, Clone, Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("http status {0}: {1}")]
    Status(u16, String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

/// A chat-completion backend. Closures are clients too, which keeps mocks short.
pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError>;
}

impl<F> ChatClient for F
where
    F: Fn(&ChatRequest) -> Result<String, ClientError> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        self(request)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmClientConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_retries: usize,
    /// Sleep before retry `k` is `backoff_ms[min(k, len - 1)]`.
    pub backoff_ms: Vec<u64>,
    pub max_concurrency: usize,
    pub timeout_secs: u64,
    /// Name of the environment variable holding the bearer token.
    pub token_env: Option<String>,
}

impl Default for LlmClientConfig {
    fn default() -> Self {
        LlmClientConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4".into(),
            temperature: 0.0,
            max_retries: 3,
            backoff_ms: vec![500, 2000, 8000],
            max_concurrency: 4,
            timeout_secs: 60,
            token_env: Some("OPENAI_API_KEY".into()),
        }
    }
}

impl LlmClientConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.model.trim().is_empty() {
            return Err(LlmError::ConfigInvalid("model is empty".into()));
        }
        if self.max_concurrency == 0 {
            return Err(LlmError::ConfigInvalid("max_concurrency must be at least 1".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(LlmError::ConfigInvalid("temperature must be a non-negative number".into()));
        }
        Ok(())
    }

    pub fn backoff(&self, attempt: usize) -> Duration {
        match self.backoff_ms.len() {
            0 => Duration::ZERO,
            n => Duration::from_millis(self.backoff_ms[attempt.min(n - 1)]),
        }
    }
}

/// OpenAI-compatible chat-completions client.
pub struct HttpChatClient {
    http: reqwest::blocking::Client,
    endpoint: String,
    token: Option<String>,
}

impl HttpChatClient {
    pub fn new(config: &LlmClientConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let token = match &config.token_env {
            Some(var) => match std::env::var(var) {
                Ok(t) if !t.is_empty() => Some(t),
                _ => {
                    log::warn!("environment variable {var} is not set; sending requests without a token");
                    None
                }
            },
            None => None,
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .build()
            .map_err(|e| LlmError::ConfigInvalid(e.to_string()))?;
        Ok(HttpChatClient { http, endpoint: config.endpoint.clone(), token })
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        let mut req = self.http.post(&self.endpoint).json(request);
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status();
        let body = resp.text().map_err(|e| ClientError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ClientError::Status(status.as_u16(), body));
        }
        let v: Value = serde_json::from_str(&body).map_err(|e| ClientError::Malformed(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ClientError::Malformed("missing choices[0].message.content".into()))
    }
}
