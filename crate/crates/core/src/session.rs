//! Multi-turn editing sessions.
//!
//! A [`Session`] keeps every image version on a stack, so undo is a pop and
//! restores the previous result bit for bit. [`Assistant::turn`] is the full
//! request path: plan, execute, push, record.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispatch::{execute_plan, DispatchError, Dispatcher, EditOutcome, ExecutorError, InvocationPlan};
use crate::exec::{ExecutionContext, ImageService, StubImageService};
use crate::imaging::{BinaryMask, ImageError, RasterImage};
use crate::llm::{ChatMessage, LlmBackend};
use crate::removal::RemovalPipeline;

/// Prior turns replayed into the main call.
pub const DEFAULT_HISTORY_TURNS: usize = 8;
pub const DEFAULT_MAX_UPLOAD_BYTES: usize = 20 * 1024 * 1024;
pub const DEFAULT_MAX_PIXELS: u64 = 4096 * 4096;

pub const FAILURE_REPLY: &str = "Sorry, I could not work out which edit to make. Could you rephrase the request?";

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("no image uploaded yet")]
    NoImage,
    #[error("nothing to undo")]
    NothingToUndo,
    #[error("upload of {size} {unit} exceeds the limit of {limit}")]
    SizeLimit { size: u64, limit: u64, unit: &'static str },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("storage: {0}")]
    Storage(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UploadLimits {
    pub max_bytes: usize,
    pub max_pixels: u64,
}

impl Default for UploadLimits {
    fn default() -> Self {
        Self {
            max_bytes: DEFAULT_MAX_UPLOAD_BYTES,
            max_pixels: DEFAULT_MAX_PIXELS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnStatus {
    Applied,
    /// Some group resolved nothing, or a step failed after earlier steps applied.
    Partial,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub instruction: String,
    pub reply: String,
    pub functions: Vec<String>,
    pub token_usage: usize,
    pub status: TurnStatus,
    pub at_ms: u64,
}

#[derive(Debug, Clone)]
pub struct Session {
    id: String,
    images: Vec<RasterImage>,
    history: Vec<HistoryEntry>,
    created_ms: u64,
    updated_ms: u64,
    token_total: usize,
    region: Option<BinaryMask>,
    image_id: Option<String>,
}

impl Default for Session {
    fn default() -> Self {
        Self::new()
    }
}

impl Session {
    pub fn new() -> Self {
        Self::with_id(uuid::Uuid::new_v4().simple().to_string())
    }

    pub fn with_id(id: impl Into<String>) -> Self {
        let now = now_ms();
        Self {
            id: id.into(),
            images: Vec::new(),
            history: Vec::new(),
            created_ms: now,
            updated_ms: now,
            token_total: 0,
            region: None,
            image_id: None,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn current_image(&self) -> Option<&RasterImage> {
        self.images.last()
    }

    pub fn original_image(&self) -> Option<&RasterImage> {
        self.images.first()
    }

    pub fn stack_len(&self) -> usize {
        self.images.len()
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    pub fn token_total(&self) -> usize {
        self.token_total
    }

    pub fn created_ms(&self) -> u64 {
        self.created_ms
    }

    pub fn updated_ms(&self) -> u64 {
        self.updated_ms
    }

    pub fn region(&self) -> Option<&BinaryMask> {
        self.region.as_ref()
    }

    pub fn image_id(&self) -> Option<&str> {
        self.image_id.as_deref()
    }

    fn touch(&mut self) {
        self.updated_ms = now_ms().max(self.updated_ms);
    }

    /// Replaces the whole stack with `image`. History is kept; the edit
    /// region and image id are cleared since they described the old image.
    pub fn set_image(&mut self, image: RasterImage) {
        self.images = vec![image];
        self.region = None;
        self.image_id = None;
        self.touch();
    }

    pub fn upload(&mut self, bytes: &[u8], limits: &UploadLimits) -> Result<(), SessionError> {
        if bytes.len() > limits.max_bytes {
            return Err(SessionError::SizeLimit {
                size: bytes.len() as u64,
                limit: limits.max_bytes as u64,
                unit: "bytes",
            });
        }
        let image = RasterImage::decode(bytes)?;
        let pixels = image.pixel_count() as u64;
        if pixels > limits.max_pixels {
            return Err(SessionError::SizeLimit {
                size: pixels,
                limit: limits.max_pixels,
                unit: "pixels",
            });
        }
        self.set_image(image);
        Ok(())
    }

    /// Region used by masked edits. Must match the current image.
    pub fn set_region(&mut self, region: Option<BinaryMask>) -> Result<(), SessionError> {
        if let Some(mask) = &region {
            self.current_image().ok_or(SessionError::NoImage)?.check_mask(mask)?;
        }
        self.region = region;
        self.touch();
        Ok(())
    }

    /// Id handed to stub segmentation manifests instead of the image digest.
    pub fn set_image_id(&mut self, id: Option<String>) {
        self.image_id = id;
    }

    /// Pops the latest version and returns the new top. The original upload
    /// is never popped.
    pub fn undo(&mut self) -> Result<&RasterImage, SessionError> {
        if self.images.len() < 2 {
            return Err(SessionError::NothingToUndo);
        }
        self.images.pop();
        self.touch();
        Ok(self.images.last().expect("stack keeps the original"))
    }

    fn push(&mut self, image: RasterImage) {
        self.images.push(image);
        self.touch();
    }

    /// Prior turns as alternating user/assistant messages, newest last.
    pub fn history_messages(&self, max_turns: usize) -> Vec<ChatMessage> {
        let skip = self.history.len().saturating_sub(max_turns);
        self.history[skip..]
            .iter()
            .flat_map(|h| [ChatMessage::user(h.instruction.clone()), ChatMessage::assistant(h.reply.clone())])
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum TurnError {
    #[error(transparent)]
    Session(#[from] SessionError),
    /// Planning failed; the image stack is untouched.
    #[error("{error}")]
    Invocation { reply: String, error: DispatchError },
    /// A step failed. Earlier steps' result was pushed if it differs from the input.
    #[error("{error}")]
    Execution { reply: String, error: Box<ExecutorError> },
}

impl TurnError {
    pub fn reply(&self) -> String {
        match self {
            TurnError::Session(e) => e.to_string(),
            TurnError::Invocation { reply, .. } | TurnError::Execution { reply, .. } => reply.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryPolicy {
    pub include: bool,
    pub max_turns: usize,
}

impl Default for HistoryPolicy {
    fn default() -> Self {
        Self {
            include: true,
            max_turns: DEFAULT_HISTORY_TURNS,
        }
    }
}

/// Everything a turn needs besides the session.
#[derive(Clone)]
pub struct Assistant {
    dispatcher: Dispatcher,
    backend: Arc<dyn LlmBackend>,
    removal: Option<Arc<RemovalPipeline>>,
    services: Arc<dyn ImageService>,
    pub history: HistoryPolicy,
}

impl Assistant {
    pub fn new(dispatcher: Dispatcher, backend: Arc<dyn LlmBackend>) -> Self {
        Self {
            dispatcher,
            backend,
            removal: None,
            services: Arc::new(StubImageService),
            history: HistoryPolicy::default(),
        }
    }

    pub fn with_removal(mut self, pipeline: Arc<RemovalPipeline>) -> Self {
        self.removal = Some(pipeline);
        self
    }

    pub fn with_services(mut self, services: Arc<dyn ImageService>) -> Self {
        self.services = services;
        self
    }

    pub fn dispatcher(&self) -> &Dispatcher {
        &self.dispatcher
    }

    pub fn backend(&self) -> &dyn LlmBackend {
        self.backend.as_ref()
    }

    pub fn turn(&self, session: &mut Session, instruction: &str) -> Result<EditOutcome, TurnError> {
        let input = session.current_image().ok_or(SessionError::NoImage)?.clone();
        let history = if self.history.include {
            session.history_messages(self.history.max_turns)
        } else {
            Vec::new()
        };
        let plan = match self.dispatcher.plan(instruction, &history, self.backend.as_ref()) {
            Ok(plan) => plan,
            Err(error) => {
                session.token_total += error.tokens_spent();
                session.touch();
                return Err(TurnError::Invocation {
                    reply: FAILURE_REPLY.to_string(),
                    error,
                });
            }
        };
        let image_id = session.image_id.clone();
        let ctx = ExecutionContext {
            instruction,
            region: session.region.as_ref(),
            image_id: image_id.as_deref(),
            backend: self.backend.as_ref(),
            removal: self.removal.as_deref(),
            services: self.services.as_ref(),
        };
        match execute_plan(plan, &input, &ctx) {
            Ok(outcome) => {
                let status = if outcome.plan.is_partial() {
                    TurnStatus::Partial
                } else {
                    TurnStatus::Applied
                };
                self.record(session, instruction, &outcome.reply, &outcome.plan, status);
                session.push(outcome.image.clone());
                Ok(outcome)
            }
            Err(error) => {
                let reply = format!(
                    "I applied {} of {} edits; {} failed: {}",
                    error.step_index,
                    error.plan.steps.len(),
                    error.function,
                    error.cause
                );
                self.record(session, instruction, &reply, &error.plan, TurnStatus::Partial);
                if error.partial != input {
                    session.push(error.partial.clone());
                }
                Err(TurnError::Execution { reply, error })
            }
        }
    }

    fn record(&self, session: &mut Session, instruction: &str, reply: &str, plan: &InvocationPlan, status: TurnStatus) {
        session.token_total += plan.token_usage;
        session.history.push(HistoryEntry {
            instruction: instruction.to_string(),
            reply: reply.to_string(),
            functions: plan.leaf_names().into_iter().map(String::from).collect(),
            token_usage: plan.token_usage,
            status,
            at_ms: now_ms(),
        });
    }
}

#[derive(Serialize, Deserialize)]
struct SnapshotMeta {
    id: String,
    created_ms: u64,
    updated_ms: u64,
    token_total: usize,
    versions: usize,
    #[serde(default)]
    image_id: Option<String>,
    #[serde(default)]
    has_region: bool,
    history: Vec<HistoryEntry>,
}

/// Live sessions, each behind its own lock so turns on one session serialize
/// while different sessions proceed in parallel.
pub struct SessionStore {
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    idle_ttl: Duration,
    snapshot_dir: Option<PathBuf>,
    pub limits: UploadLimits,
}

impl SessionStore {
    pub fn new(idle_ttl: Duration) -> Self {
        Self {
            sessions: Mutex::new(HashMap::new()),
            idle_ttl,
            snapshot_dir: None,
            limits: UploadLimits::default(),
        }
    }

    /// Store that snapshots sessions under `dir` and reloads any found there.
    pub fn persistent(idle_ttl: Duration, dir: impl Into<PathBuf>) -> Result<Self, SessionError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| SessionError::Storage(e.to_string()))?;
        let store = Self {
            snapshot_dir: Some(dir.clone()),
            ..Self::new(idle_ttl)
        };
        let entries = std::fs::read_dir(&dir).map_err(|e| SessionError::Storage(e.to_string()))?;
        for entry in entries.flatten() {
            if !entry.path().join("meta.json").is_file() {
                continue;
            }
            match load_snapshot(&entry.path()) {
                Ok(s) => {
                    store.insert(s);
                }
                Err(e) => log::warn!("skipping snapshot {}: {e}", entry.path().display()),
            }
        }
        Ok(store)
    }

    pub fn create(&self) -> Arc<Mutex<Session>> {
        self.insert(Session::new())
    }

    pub fn insert(&self, session: Session) -> Arc<Mutex<Session>> {
        let id = session.id().to_string();
        let handle = Arc::new(Mutex::new(session));
        self.sessions.lock().expect("store lock").insert(id, handle.clone());
        handle
    }

    pub fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>, SessionError> {
        self.sessions
            .lock()
            .expect("store lock")
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops sessions idle for longer than the TTL as of `now_ms`. Sessions
    /// with a turn in flight are skipped.
    pub fn evict_idle(&self, now_ms: u64) -> usize {
        let ttl = self.idle_ttl.as_millis() as u64;
        let mut map = self.sessions.lock().expect("store lock");
        let before = map.len();
        map.retain(|_, s| match s.try_lock() {
            Ok(s) => now_ms.saturating_sub(s.updated_ms) <= ttl,
            Err(_) => true,
        });
        before - map.len()
    }

    pub fn evict_idle_now(&self) -> usize {
        self.evict_idle(now_ms())
    }

    /// Writes the session snapshot if the store is persistent.
    pub fn persist(&self, session: &Session) -> Result<(), SessionError> {
        match &self.snapshot_dir {
            Some(dir) => save_snapshot(session, &dir.join(&session.id)),
            None => Ok(()),
        }
    }
}

fn storage(e: impl std::fmt::Display) -> SessionError {
    SessionError::Storage(e.to_string())
}

/// One PNG per stack version plus `meta.json`.
pub fn save_snapshot(session: &Session, dir: &Path) -> Result<(), SessionError> {
    std::fs::create_dir_all(dir).map_err(storage)?;
    for (i, img) in session.images.iter().enumerate() {
        img.save_png(dir.join(format!("v{i}.png")))?;
    }
    // Versions beyond the current stack are stale after an undo.
    let mut i = session.images.len();
    while dir.join(format!("v{i}.png")).exists() {
        std::fs::remove_file(dir.join(format!("v{i}.png"))).map_err(storage)?;
        i += 1;
    }
    if let Some(region) = &session.region {
        region.save_png(dir.join("region.png"))?;
    }
    let meta = SnapshotMeta {
        id: session.id.clone(),
        created_ms: session.created_ms,
        updated_ms: session.updated_ms,
        token_total: session.token_total,
        versions: session.images.len(),
        image_id: session.image_id.clone(),
        has_region: session.region.is_some(),
        history: session.history.clone(),
    };
    let text = serde_json::to_string_pretty(&meta).map_err(storage)?;
    std::fs::write(dir.join("meta.json"), text).map_err(storage)
}

pub fn load_snapshot(dir: &Path) -> Result<Session, SessionError> {
    let text = std::fs::read_to_string(dir.join("meta.json")).map_err(storage)?;
    let meta: SnapshotMeta = serde_json::from_str(&text).map_err(storage)?;
    let images = (0..meta.versions)
        .map(|i| RasterImage::load(dir.join(format!("v{i}.png"))))
        .collect::<Result<Vec<_>, _>>()?;
    let region = if meta.has_region {
        Some(BinaryMask::load(dir.join("region.png"))?)
    } else {
        None
    };
    Ok(Session {
        id: meta.id,
        images,
        history: meta.history,
        created_ms: meta.created_ms,
        updated_ms: meta.updated_ms,
        token_total: meta.token_total,
        region,
        image_id: meta.image_id,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{apply_filter, Filter};
    use crate::llm::{Matcher, ScriptEntry, ScriptFixture, ScriptedBackend};
    use crate::prompt::{PromptOptions, MAIN_HEADER};
    use crate::registry::FunctionRegistry;

    fn assistant(entries: Vec<ScriptEntry>) -> (Assistant, Arc<ScriptedBackend>) {
        let backend = Arc::new(ScriptedBackend::new(ScriptFixture { strict: false, entries }).unwrap());
        let dispatcher = Dispatcher::new(FunctionRegistry::bundled(), PromptOptions::default());
        (Assistant::new(dispatcher, backend.clone()), backend)
    }

    fn main(user: &str, resp: &str) -> ScriptEntry {
        ScriptEntry::new(Matcher::contains(user), resp).with_system(Matcher::contains(MAIN_HEADER))
    }

    fn sub(user: &str, resp: &str) -> ScriptEntry {
        ScriptEntry::new(Matcher::contains(user), resp).with_system(Matcher::contains("Sub-functions of"))
    }

    fn image() -> RasterImage {
        RasterImage::from_fn_rgb(8, 6, |x, y| [30 + x as u8 * 20, 40 + y as u8 * 25, 90])
    }

    fn uploaded() -> Session {
        let mut s = Session::new();
        s.upload(&image().encode_png().unwrap(), &UploadLimits::default()).unwrap();
        s
    }

    #[test]
    fn open_eyes_turn_pushes_image() {
        let (a, _) = assistant(vec![main("open my eyes", "Functions: [Open Eyes]\nAnalysis: Opening your eyes.")]);
        let mut s = uploaded();
        let out = a.turn(&mut s, "can u open my eyes").unwrap();
        assert_eq!(out.reply, "Opening your eyes.");
        assert_eq!(s.stack_len(), 2);
        assert_eq!(s.history().len(), 1);
    }

    #[test]
    fn unparseable_turn_is_atomic_but_costs_tokens() {
        let (a, b) = assistant(vec![main("eyes", "Sure thing!")]);
        let mut s = uploaded();
        let err = a.turn(&mut s, "eyes").unwrap_err();
        assert_eq!(err.reply(), FAILURE_REPLY);
        assert_eq!(s.stack_len(), 1);
        assert!(s.history().is_empty());
        assert_eq!(b.request_count(), 2);
        assert!(s.token_total() > 0);
    }

    #[test]
    fn token_total_adds_up() {
        let (a, _) = assistant(vec![
            main("sepia", "Functions: [Photo Filters]"),
            sub("sepia", "Functions: [Sepia]"),
            main("eyes", "Functions: [Open Eyes]"),
        ]);
        let mut s = uploaded();
        let t1 = a.turn(&mut s, "sepia please").unwrap().plan.token_usage;
        let t2 = a.turn(&mut s, "eyes").unwrap().plan.token_usage;
        assert_eq!(s.token_total(), t1 + t2);
    }

    #[test]
    fn undo_and_replay() {
        let (a, _) = assistant(vec![main("sepia", "Functions: [Photo Filters]"), sub("sepia", "Functions: [Sepia]")]);
        let mut s = uploaded();
        let first = a.turn(&mut s, "sepia").unwrap().image;
        assert_eq!(first, apply_filter(&image(), Filter::Sepia).unwrap());
        assert_eq!(s.undo().unwrap(), &image());
        assert!(matches!(s.undo(), Err(SessionError::NothingToUndo)));
        let again = a.turn(&mut s, "sepia").unwrap().image;
        assert_eq!(again, first);
    }

    #[test]
    fn history_reaches_main_call_only() {
        let (a, b) = assistant(vec![
            main("sepia", "Functions: [Photo Filters]\nAnalysis: sepia done"),
            sub("sepia", "Functions: [Sepia]"),
        ]);
        let mut s = uploaded();
        a.turn(&mut s, "sepia").unwrap();
        b.clear_log();
        a.turn(&mut s, "more sepia").unwrap();
        let reqs = b.requests();
        assert_eq!(reqs[0].messages[1].content, "sepia");
        assert_eq!(reqs[0].messages[2].content, "sepia done");
        assert_eq!(reqs[1].messages.len(), 2);
    }

    #[test]
    fn history_is_capped() {
        let mut s = Session::new();
        for i in 0..12 {
            s.history.push(HistoryEntry {
                instruction: format!("i{i}"),
                reply: format!("r{i}"),
                functions: vec![],
                token_usage: 0,
                status: TurnStatus::Applied,
                at_ms: 0,
            });
        }
        let msgs = s.history_messages(DEFAULT_HISTORY_TURNS);
        assert_eq!(msgs.len(), 16);
        assert_eq!(msgs[0].content, "i4");
    }

    #[test]
    fn upload_rules() {
        let mut s = uploaded();
        s.push(image());
        s.history.push(HistoryEntry {
            instruction: "x".into(),
            reply: "y".into(),
            functions: vec![],
            token_usage: 1,
            status: TurnStatus::Applied,
            at_ms: 0,
        });
        s.upload(&image().encode_png().unwrap(), &UploadLimits::default()).unwrap();
        assert_eq!((s.stack_len(), s.history().len()), (1, 1));
        assert!(matches!(
            s.upload(b"not an image", &UploadLimits::default()),
            Err(SessionError::Image(ImageError::Decode(_)))
        ));
        let tight = UploadLimits {
            max_bytes: 10,
            max_pixels: 1,
        };
        assert!(matches!(
            s.upload(&image().encode_png().unwrap(), &tight),
            Err(SessionError::SizeLimit { .. })
        ));
    }

    #[test]
    fn no_image_turn_errors() {
        let (a, _) = assistant(vec![]);
        let mut s = Session::new();
        assert!(matches!(a.turn(&mut s, "x"), Err(TurnError::Session(SessionError::NoImage))));
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::persistent(Duration::from_secs(60), dir.path()).unwrap();
        let handle = store.create();
        let id = {
            let mut s = handle.lock().unwrap();
            s.upload(&image().encode_png().unwrap(), &store.limits).unwrap();
            s.push(apply_filter(&image(), Filter::Cool).unwrap());
            s.set_region(Some(BinaryMask::rect(8, 6, 1, 1, 2, 2))).unwrap();
            store.persist(&s).unwrap();
            s.undo().unwrap();
            store.persist(&s).unwrap();
            s.id().to_string()
        };
        let reloaded = SessionStore::persistent(Duration::from_secs(60), dir.path()).unwrap();
        let s2 = reloaded.get(&id).unwrap();
        let s2 = s2.lock().unwrap();
        assert_eq!(s2.stack_len(), 1);
        assert_eq!(s2.current_image(), Some(&image()));
        assert!(s2.region().is_some());
    }

    #[test]
    fn eviction_by_idle_time() {
        let store = SessionStore::new(Duration::from_secs(10));
        let a = store.create();
        store.create();
        let updated = a.lock().unwrap().updated_ms();
        assert_eq!(store.evict_idle(updated + 5_000), 0);
        assert_eq!(store.evict_idle(updated + 60_000), 2);
        assert!(store.is_empty());
    }
}
