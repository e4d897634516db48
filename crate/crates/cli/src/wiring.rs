//! Builds core components from [`Settings`].

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use photochat_core::exec::{executor_ids, HttpImageService};
use photochat_core::llm::RecordingBackend;
use photochat_core::removal::{HttpInpainter, Inpainter, NaiveInpainter};
use photochat_core::session::HistoryPolicy;
use photochat_core::{
    Assistant, Dispatcher, FunctionRegistry, ImageService, LiveBackend, LlmBackend, PromptEngine, PromptOptions,
    RemovalPipeline, ScriptedBackend, StubImageService,
};

use crate::config::{BackendKind, Settings};

/// The chat backend plus an optional recorder wrapped around it.
#[derive(Clone)]
pub struct Backend {
    pub handle: Arc<dyn LlmBackend>,
    recorder: Option<Arc<RecordingBackend<Arc<dyn LlmBackend>>>>,
}

impl Backend {
    pub fn from_settings(settings: &Settings, record: Option<PathBuf>) -> Result<Self> {
        let inner: Arc<dyn LlmBackend> = match settings.llm.backend {
            BackendKind::Live => Arc::new(LiveBackend::new(settings.llm.live.clone())),
            BackendKind::Scripted => {
                let Some(path) = &settings.llm.fixture else {
                    bail!("the scripted backend needs a fixture file");
                };
                Arc::new(ScriptedBackend::load(path).with_context(|| format!("loading {}", path.display()))?)
            }
        };
        Ok(match record {
            None => Self {
                handle: inner,
                recorder: None,
            },
            Some(path) => {
                let rec = Arc::new(RecordingBackend::new(inner, Some(path)));
                Self {
                    handle: rec.clone(),
                    recorder: Some(rec),
                }
            }
        })
    }

    /// Writes the recorded transcript, if recording.
    pub fn save_recording(&self) -> Result<()> {
        if let Some(rec) = &self.recorder {
            if let Some(path) = rec.save()? {
                log::info!("recorded fixture written to {}", path.display());
            }
        }
        Ok(())
    }

    pub fn is_recording(&self) -> bool {
        self.recorder.is_some()
    }
}

pub fn registry(settings: &Settings) -> Result<FunctionRegistry> {
    match &settings.registry {
        Some(path) => FunctionRegistry::load_manifest(path, executor_ids())
            .with_context(|| format!("loading registry {}", path.display())),
        None => Ok(FunctionRegistry::bundled()),
    }
}

pub fn prompts(settings: &Settings) -> Result<PromptEngine> {
    match &settings.templates {
        Some(dir) => PromptEngine::from_dir(dir).with_context(|| format!("loading templates from {}", dir.display())),
        None => Ok(PromptEngine::bundled()),
    }
}

fn model_id(settings: &Settings) -> String {
    match settings.llm.backend {
        BackendKind::Live => settings.llm.live.model_id.clone(),
        BackendKind::Scripted => String::new(),
    }
}

pub fn dispatcher(settings: &Settings) -> Result<Dispatcher> {
    let p = &settings.prompt;
    let options = PromptOptions::new(p.reasoning, p.examples, p.language)?;
    Ok(Dispatcher::new(registry(settings)?, options)
        .with_prompts(prompts(settings)?)
        .with_model_id(model_id(settings)))
}

pub fn removal(settings: &Settings) -> Result<Option<RemovalPipeline>> {
    let r = &settings.removal;
    if !r.is_configured() {
        return Ok(None);
    }
    let seg = r.segmentation();
    let inpainter: Box<dyn Inpainter> = match &r.inpaint_endpoint {
        Some(url) => Box::new(HttpInpainter::new(url.clone(), Duration::from_secs(r.timeout_secs.max(1)))),
        None => Box::new(NaiveInpainter),
    };
    let mut pipeline = RemovalPipeline::new(seg.build()?, seg.build()?, inpainter)
        .with_prompts(prompts(settings)?)
        .with_model_id(model_id(settings));
    pipeline.dilation_radius = r.dilation_radius;
    pipeline.metric = r.metric.into();
    pipeline.language = settings.prompt.language;
    Ok(Some(pipeline))
}

pub fn services(settings: &Settings) -> Arc<dyn ImageService> {
    match &settings.services.endpoint {
        Some(url) => Arc::new(HttpImageService::new(
            url.clone(),
            Duration::from_secs(settings.services.timeout_secs.max(1)),
        )),
        None => Arc::new(StubImageService),
    }
}

pub fn assistant(settings: &Settings, backend: &Backend) -> Result<Assistant> {
    let mut assistant = Assistant::new(dispatcher(settings)?, backend.handle.clone()).with_services(services(settings));
    if let Some(pipeline) = removal(settings)? {
        assistant = assistant.with_removal(Arc::new(pipeline));
    }
    assistant.history = HistoryPolicy {
        include: settings.session.include_history,
        max_turns: settings.session.history_turns,
    };
    Ok(assistant)
}
