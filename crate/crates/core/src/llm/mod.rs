//! Chat-completion access.
//!
//! [`LlmBackend`] is the seam between the orchestration logic and a language
//! model. [`LiveBackend`] speaks the common `/chat/completions` HTTP protocol;
//! [`ScriptedBackend`] answers from a fixture and is what tests and the
//! evaluation harness run against. [`RecordingBackend`] wraps either one and
//! captures a session as a replayable fixture.

mod live;
mod record;
mod scripted;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::HttpError;

pub use live::{LiveBackend, LiveConfig, DEFAULT_API_KEY_ENV};
pub use record::RecordingBackend;
pub use scripted::{Matcher, ScriptEntry, ScriptFixture, ScriptedBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    /// Empty means "the backend's configured model".
    #[serde(default)]
    pub model_id: String,
    #[serde(default)]
    pub temperature: f64,
}

impl ChatRequest {
    /// A system prompt followed by one user message, temperature 0.
    pub fn new(system: impl Into<String>, user: impl Into<String>) -> Self {
        Self {
            messages: vec![ChatMessage::system(system), ChatMessage::user(user)],
            model_id: String::new(),
            temperature: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        match self.messages.first() {
            None => Err(GatewayError::InvalidRequest("request has no messages".into())),
            Some(m) if m.role != Role::System => Err(GatewayError::InvalidRequest(
                "first message must be the system prompt".into(),
            )),
            Some(_) => Ok(()),
        }
    }

    pub fn system(&self) -> Option<&str> {
        self.messages
            .first()
            .filter(|m| m.role == Role::System)
            .map(|m| m.content.as_str())
    }

    pub fn last_user(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Live,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResult {
    pub text: String,
    pub prompt_tokens: usize,
    pub completion_tokens: usize,
    pub source: Source,
}

impl ChatResult {
    pub fn total_tokens(&self) -> usize {
        self.prompt_tokens + self.completion_tokens
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("authentication: {0}")]
    Auth(String),
    #[error("timeout: {0}")]
    Timeout(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("script exhausted: no entry matches user message {last_user:?}")]
    ScriptExhausted { last_user: String },
    #[error("fixture: {0}")]
    Fixture(String),
    #[error("storage: {0}")]
    Storage(String),
}

impl From<HttpError> for GatewayError {
    fn from(err: HttpError) -> Self {
        match err {
            HttpError::Transport(m) => GatewayError::Transport(m),
            HttpError::Auth(status) => GatewayError::Auth(format!("status {status}")),
            HttpError::Timeout(m) => GatewayError::Timeout(m),
            HttpError::Status { status, body } => {
                GatewayError::Transport(format!("status {status}: {body}"))
            }
            HttpError::Protocol(m) => GatewayError::Protocol(m),
        }
    }
}

pub trait LlmBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResult, GatewayError>;
}

impl<T: LlmBackend + ?Sized> LlmBackend for &T {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResult, GatewayError> {
        (**self).complete(request)
    }
}

impl<T: LlmBackend + ?Sized> LlmBackend for std::sync::Arc<T> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResult, GatewayError> {
        (**self).complete(request)
    }
}

impl<T: LlmBackend + ?Sized> LlmBackend for Box<T> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResult, GatewayError> {
        (**self).complete(request)
    }
}

/// Validates the request, then forwards it to `backend`.
pub fn complete(request: &ChatRequest, backend: &dyn LlmBackend) -> Result<ChatResult, GatewayError> {
    request.validate()?;
    backend.complete(request)
}
