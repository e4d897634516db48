use std::path::Path;
use std::sync::{Arc, Mutex};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{ChatRequest, ChatResult, GatewayError, LlmBackend, Source};
use crate::prompt::{QuarterByteCounter, TokenCounter};

/// Text predicate used by fixture entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    Contains(String),
    Exact(String),
    Regex(String),
}

impl Matcher {
    pub fn contains(s: impl Into<String>) -> Self {
        Matcher::Contains(s.into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    /// Applied to the last user message.
    pub user: Matcher,
    /// Optional predicate on the system prompt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<Matcher>,
    pub response: String,
}

impl ScriptEntry {
    pub fn new(user: Matcher, response: impl Into<String>) -> Self {
        Self {
            user,
            system: None,
            response: response.into(),
        }
    }

    pub fn with_system(mut self, system: Matcher) -> Self {
        self.system = Some(system);
        self
    }
}

/// Ordered request/response script.
///
/// Non-strict fixtures answer with the first entry whose matchers accept the
/// request. Strict fixtures are consumed in order: request `k` must match
/// entry `k`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScriptFixture {
    #[serde(default)]
    pub strict: bool,
    pub entries: Vec<ScriptEntry>,
}

impl ScriptFixture {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| GatewayError::Fixture(format!("{}: {e}", path.as_ref().display())))?;
        serde_json::from_str(&text).map_err(|e| GatewayError::Fixture(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GatewayError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| GatewayError::Storage(e.to_string()))?;
        std::fs::write(path.as_ref(), text + "\n")
            .map_err(|e| GatewayError::Storage(format!("{}: {e}", path.as_ref().display())))
    }
}

enum Compiled {
    Contains(String),
    Exact(String),
    Regex(Regex),
}

impl Compiled {
    fn new(m: &Matcher) -> Result<Self, GatewayError> {
        Ok(match m {
            Matcher::Contains(s) => Compiled::Contains(s.clone()),
            Matcher::Exact(s) => Compiled::Exact(s.clone()),
            Matcher::Regex(p) => {
                Compiled::Regex(Regex::new(p).map_err(|e| GatewayError::Fixture(e.to_string()))?)
            }
        })
    }

    fn is_match(&self, text: &str) -> bool {
        match self {
            Compiled::Contains(s) => text.contains(s.as_str()),
            Compiled::Exact(s) => text == s,
            Compiled::Regex(r) => r.is_match(text),
        }
    }
}

struct CompiledEntry {
    user: Compiled,
    system: Option<Compiled>,
    response: String,
}

impl CompiledEntry {
    fn accepts(&self, request: &ChatRequest) -> bool {
        let user_ok = request.last_user().is_some_and(|u| self.user.is_match(u));
        let system_ok = match &self.system {
            None => true,
            Some(m) => request.system().is_some_and(|s| m.is_match(s)),
        };
        user_ok && system_ok
    }
}

/// Deterministic fixture-driven backend. Keeps a log of every request it saw.
pub struct ScriptedBackend {
    entries: Vec<CompiledEntry>,
    strict: bool,
    cursor: Mutex<usize>,
    log: Mutex<Vec<ChatRequest>>,
    counter: Arc<dyn TokenCounter>,
}

impl std::fmt::Debug for ScriptedBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScriptedBackend")
            .field("entries", &self.entries.len())
            .field("strict", &self.strict)
            .finish_non_exhaustive()
    }
}

impl ScriptedBackend {
    pub fn new(fixture: ScriptFixture) -> Result<Self, GatewayError> {
        Self::with_counter(fixture, Arc::new(QuarterByteCounter))
    }

    pub fn with_counter(fixture: ScriptFixture, counter: Arc<dyn TokenCounter>) -> Result<Self, GatewayError> {
        let entries = fixture
            .entries
            .iter()
            .map(|e| {
                Ok(CompiledEntry {
                    user: Compiled::new(&e.user)?,
                    system: e.system.as_ref().map(Compiled::new).transpose()?,
                    response: e.response.clone(),
                })
            })
            .collect::<Result<_, GatewayError>>()?;
        Ok(Self {
            entries,
            strict: fixture.strict,
            cursor: Mutex::new(0),
            log: Mutex::new(Vec::new()),
            counter,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        Self::new(ScriptFixture::load(path)?)
    }

    /// Every request received so far, in arrival order.
    pub fn requests(&self) -> Vec<ChatRequest> {
        self.log.lock().expect("log lock").clone()
    }

    pub fn request_count(&self) -> usize {
        self.log.lock().expect("log lock").len()
    }

    pub fn clear_log(&self) {
        self.log.lock().expect("log lock").clear();
    }

    /// Rewinds a strict fixture to its first entry.
    pub fn rewind(&self) {
        *self.cursor.lock().expect("cursor lock") = 0;
    }

    fn pick(&self, request: &ChatRequest) -> Option<&CompiledEntry> {
        if self.strict {
            let mut cursor = self.cursor.lock().expect("cursor lock");
            let entry = self.entries.get(*cursor).filter(|e| e.accepts(request))?;
            *cursor += 1;
            Some(entry)
        } else {
            self.entries.iter().find(|e| e.accepts(request))
        }
    }
}

impl LlmBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResult, GatewayError> {
        request.validate()?;
        self.log.lock().expect("log lock").push(request.clone());
        let entry = self.pick(request).ok_or_else(|| GatewayError::ScriptExhausted {
            last_user: request.last_user().unwrap_or_default().to_string(),
        })?;
        let prompt_tokens = request
            .messages
            .iter()
            .map(|m| self.counter.count(&m.content))
            .sum();
        Ok(ChatResult {
            text: entry.response.clone(),
            prompt_tokens,
            completion_tokens: self.counter.count(&entry.response),
            source: Source::Scripted,
        })
    }
}
