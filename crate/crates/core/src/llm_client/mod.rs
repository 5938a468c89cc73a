//! Chat-completions transport used by the synthesis pipeline and the evaluator.
//!
//! Everything talks to a [`ChatBackend`]. [`HttpBackend`] speaks the usual
//! `POST /chat/completions` JSON protocol with retries, [`Cassette`] records
//! or replays responses keyed by [`ChatRequest::digest`], and [`mock`] holds
//! in-process backends for tests and offline runs.

mod cassette;
mod http;
pub mod mock;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cassette::{Cassette, CassetteMode};
pub use http::HttpBackend;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error("no response after {attempts} attempts: {detail}")]
    Timeout { attempts: u32, detail: String },
    #[error("endpoint answered HTTP {code}: {body}")]
    HttpStatus { code: u16, body: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("no cassette entry for request {digest}")]
    CassetteMiss { digest: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("environment variable {0} holding the API key is not set")]
    MissingApiKey(String),
    #[error("cassette I/O: {0}")]
    Io(String),
}

pub type Result<T, E = LlmError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            role: role.into(),
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new("system", content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new("user", content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new("assistant", content)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ChatRequest {
    pub fn new(model_id: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        Self {
            model_id: model_id.into(),
            messages,
            temperature: 0.0,
            max_tokens: 2048,
            seed: None,
        }
    }

    pub fn temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .messages
            .first()
            .ok_or_else(|| LlmError::InvalidRequest("no messages".into()))?;
        if first.role != "system" && first.role != "user" {
            return Err(LlmError::InvalidRequest(format!(
                "first message has role {}",
                first.role
            )));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::InvalidRequest("temperature must be >= 0".into()));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidRequest(
                "max_tokens must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Stable hex SHA-256 over model, messages, temperature, max_tokens and seed.
    pub fn digest(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            model_id: &'a str,
            messages: &'a [ChatMessage],
            temperature: f64,
            max_tokens: u32,
            seed: Option<u64>,
        }
        let key = Key {
            model_id: &self.model_id,
            messages: &self.messages,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            seed: self.seed,
        };
        let bytes = serde_json::to_vec(&key).expect("request key serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub base_url: String,
    /// Name of the environment variable holding the API key, if any.
    pub api_key_env: Option<String>,
    pub timeout_s: f64,
    pub max_retries: u32,
    pub backoff_base_s: f64,
    pub max_in_flight: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000/v1".into(),
            api_key_env: None,
            timeout_s: 120.0,
            max_retries: 3,
            backoff_base_s: 1.0,
            max_in_flight: 8,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<()> {
        if self.timeout_s.is_nan() || self.timeout_s <= 0.0 {
            return Err(LlmError::InvalidRequest("timeout must be positive".into()));
        }
        if self.backoff_base_s < 0.0 {
            return Err(LlmError::InvalidRequest(
                "backoff must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Anything that can answer a chat request with the first candidate's text.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<String>;
}

impl<T: ChatBackend + ?Sized> ChatBackend for Arc<T> {
    fn complete(&self, req: &ChatRequest) -> Result<String> {
        (**self).complete(req)
    }
}

impl<T: ChatBackend + ?Sized> ChatBackend for &T {
    fn complete(&self, req: &ChatRequest) -> Result<String> {
        (**self).complete(req)
    }
}

impl<T: ChatBackend + ?Sized> ChatBackend for Box<T> {
    fn complete(&self, req: &ChatRequest) -> Result<String> {
        (**self).complete(req)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req() -> ChatRequest {
        ChatRequest::new("m", vec![ChatMessage::user("hi")])
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = req();
        assert_eq!(a.digest(), req().digest());
        assert_eq!(a.digest().len(), 64);
        assert_ne!(a.digest(), req().temperature(0.5).digest());
        assert_ne!(a.digest(), req().seed(Some(1)).digest());
        assert_ne!(a.digest(), req().max_tokens(10).digest());
    }

    #[test]
    fn request_validation() {
        assert!(req().validate().is_ok());
        assert!(ChatRequest::new("m", vec![]).validate().is_err());
        assert!(ChatRequest::new("m", vec![ChatMessage::assistant("x")])
            .validate()
            .is_err());
        assert!(req().temperature(-1.0).validate().is_err());
        assert!(req().max_tokens(0).validate().is_err());
    }
}
