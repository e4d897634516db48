use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::{ChatRequest, ChatResult, GatewayError, LlmBackend, Matcher, ScriptEntry, ScriptFixture};

/// Passes requests through to an inner backend and, when recording is on,
/// remembers each exchange so it can be written out as a strict fixture.
pub struct RecordingBackend<B> {
    inner: B,
    target: Option<PathBuf>,
    calls: Mutex<Vec<(ChatRequest, ChatResult)>>,
}

impl<B: LlmBackend> RecordingBackend<B> {
    /// `target = None` disables recording entirely.
    pub fn new(inner: B, target: Option<PathBuf>) -> Self {
        Self {
            inner,
            target,
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn is_recording(&self) -> bool {
        self.target.is_some()
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    /// Strict fixture that replays the recorded exchanges in order.
    pub fn to_fixture(&self) -> ScriptFixture {
        let calls = self.calls.lock().expect("recorder lock");
        ScriptFixture {
            strict: true,
            entries: calls
                .iter()
                .map(|(req, res)| {
                    ScriptEntry::new(
                        Matcher::Exact(req.last_user().unwrap_or_default().to_string()),
                        res.text.clone(),
                    )
                })
                .collect(),
        }
    }

    /// Writes the transcript to the target path. Returns the path written, or
    /// `None` when recording is off.
    pub fn save(&self) -> Result<Option<&Path>, GatewayError> {
        let Some(path) = &self.target else {
            return Ok(None);
        };
        self.to_fixture().save(path)?;
        Ok(Some(path.as_path()))
    }
}

impl<B: LlmBackend> LlmBackend for RecordingBackend<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResult, GatewayError> {
        let result = self.inner.complete(request)?;
        if self.target.is_some() {
            self.calls
                .lock()
                .expect("recorder lock")
                .push((request.clone(), result.clone()));
        }
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedBackend;

    fn source() -> ScriptedBackend {
        ScriptedBackend::new(ScriptFixture {
            strict: false,
            entries: vec![
                ScriptEntry::new(Matcher::contains("one"), "Functions: [A]"),
                ScriptEntry::new(Matcher::contains("two"), "Functions: [B]"),
                ScriptEntry::new(Matcher::contains("three"), "Functions: [C]\nAnalysis: c"),
            ],
        })
        .unwrap()
    }

    #[test]
    fn three_calls_replay_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.json");
        let rec = RecordingBackend::new(source(), Some(path.clone()));
        let reqs: Vec<_> = ["one", "two", "three"]
            .iter()
            .map(|u| ChatRequest::new("sys", *u))
            .collect();
        let live: Vec<_> = reqs.iter().map(|r| rec.complete(r).unwrap()).collect();
        assert_eq!(rec.save().unwrap(), Some(path.as_path()));

        let fixture = ScriptFixture::load(&path).unwrap();
        assert_eq!(fixture.entries.len(), 3);
        assert!(fixture.strict);
        let replay = ScriptedBackend::new(fixture).unwrap();
        for (req, orig) in reqs.iter().zip(&live) {
            assert_eq!(replay.complete(req).unwrap().text, orig.text);
        }
    }

    #[test]
    fn recording_off_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let rec = RecordingBackend::new(source(), None);
        rec.complete(&ChatRequest::new("sys", "one")).unwrap();
        assert_eq!(rec.save().unwrap(), None);
        assert!(rec.to_fixture().entries.is_empty());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
