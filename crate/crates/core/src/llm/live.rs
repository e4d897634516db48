use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ChatMessage, ChatRequest, ChatResult, GatewayError, LlmBackend, Source};
use crate::http::JsonClient;

pub const DEFAULT_API_KEY_ENV: &str = "PHOTOCHAT_API_KEY";

/// Connection settings for an OpenAI-compatible chat-completions server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiveConfig {
    /// Base URL up to and including the API version, e.g. `http://localhost:8000/v1`.
    pub base_url: String,
    pub model_id: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: u64,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model_id: "Qwen2-72B-Instruct".into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            timeout_secs: 60,
        }
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: usize,
    #[serde(default)]
    completion_tokens: usize,
}

pub struct LiveBackend {
    config: LiveConfig,
    client: JsonClient,
}

impl std::fmt::Debug for LiveBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LiveBackend")
            .field("base_url", &self.config.base_url)
            .field("model_id", &self.config.model_id)
            .finish_non_exhaustive()
    }
}

impl LiveBackend {
    /// Reads the bearer token from `config.api_key_env`; a missing variable
    /// means no Authorization header is sent.
    pub fn new(config: LiveConfig) -> Self {
        let token = std::env::var(&config.api_key_env).ok().filter(|t| !t.is_empty());
        Self::with_token(config, token)
    }

    pub fn with_token(config: LiveConfig, token: Option<String>) -> Self {
        let client = JsonClient::new(Duration::from_secs(config.timeout_secs.max(1)), token);
        Self { config, client }
    }

    pub fn config(&self) -> &LiveConfig {
        &self.config
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

impl LlmBackend for LiveBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResult, GatewayError> {
        request.validate()?;
        let model = if request.model_id.is_empty() {
            &self.config.model_id
        } else {
            &request.model_id
        };
        let body = WireRequest {
            model,
            messages: &request.messages,
            temperature: request.temperature,
        };
        let resp: WireResponse = self.client.post(&self.endpoint(), &body)?;
        let text = resp
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| GatewayError::Protocol("response has no message content".into()))?;
        let usage = resp.usage.unwrap_or(WireUsage {
            prompt_tokens: 0,
            completion_tokens: 0,
        });
        Ok(ChatResult {
            text,
            prompt_tokens: usage.prompt_tokens,
            completion_tokens: usage.completion_tokens,
            source: Source::Live,
        })
    }
}
