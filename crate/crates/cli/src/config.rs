//! TOML settings file. Every section is optional; command-line flags win.
//!
//! ```toml
//! registry = "registry.json"
//!
//! [prompt]
//! reasoning = true
//! examples = 3
//! language = "en"
//!
//! [llm]
//! backend = "live"            # or "scripted"
//! fixture = "fixture.json"    # scripted only
//! base_url = "http://127.0.0.1:8000/v1"
//! model_id = "Qwen2-72B-Instruct"
//! api_key_env = "PHOTOCHAT_API_KEY"
//!
//! [session]
//! idle_ttl_secs = 3600
//! state_dir = "state"
//!
//! [removal]
//! stub_manifest = "masks/manifest.json"   # or endpoint = "http://..."
//! inpaint_endpoint = "http://..."         # naive inpainting when unset
//!
//! [services]
//! endpoint = "http://..."    # identity stubs when unset
//! ```

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use photochat_core::llm::LiveConfig;
use photochat_core::prompt::DEFAULT_EXAMPLES;
use photochat_core::removal::{OverlapMetric, SegmentationAdapterConfig, DEFAULT_DILATION_RADIUS};
use photochat_core::session::{DEFAULT_HISTORY_TURNS, DEFAULT_MAX_PIXELS, DEFAULT_MAX_UPLOAD_BYTES};
use photochat_core::Language;
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub registry: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub prompt: PromptSettings,
    pub llm: LlmSettings,
    pub session: SessionSettings,
    pub removal: RemovalSettings,
    pub services: ServiceSettings,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptSettings {
    pub reasoning: bool,
    pub examples: usize,
    pub language: Language,
}

impl Default for PromptSettings {
    fn default() -> Self {
        Self {
            reasoning: true,
            examples: DEFAULT_EXAMPLES,
            language: Language::En,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Live,
    Scripted,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct LlmSettings {
    pub backend: BackendKind,
    pub fixture: Option<PathBuf>,
    #[serde(flatten)]
    pub live: LiveConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionSettings {
    pub idle_ttl_secs: u64,
    pub state_dir: Option<PathBuf>,
    pub history_turns: usize,
    pub include_history: bool,
    pub max_upload_bytes: usize,
    pub max_pixels: u64,
}

impl Default for SessionSettings {
    fn default() -> Self {
        Self {
            idle_ttl_secs: 3600,
            state_dir: None,
            history_turns: DEFAULT_HISTORY_TURNS,
            include_history: true,
            max_upload_bytes: DEFAULT_MAX_UPLOAD_BYTES,
            max_pixels: DEFAULT_MAX_PIXELS,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemovalSettings {
    pub endpoint: Option<String>,
    pub stub_manifest: Option<PathBuf>,
    pub inpaint_endpoint: Option<String>,
    pub timeout_secs: u64,
    pub dilation_radius: u32,
    pub metric: Metric,
}

impl Default for RemovalSettings {
    fn default() -> Self {
        Self {
            endpoint: None,
            stub_manifest: None,
            inpaint_endpoint: None,
            timeout_secs: 60,
            dilation_radius: DEFAULT_DILATION_RADIUS,
            metric: Metric::Intersection,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Intersection,
    Iou,
}

impl From<Metric> for OverlapMetric {
    fn from(m: Metric) -> Self {
        match m {
            Metric::Intersection => OverlapMetric::Intersection,
            Metric::Iou => OverlapMetric::Iou,
        }
    }
}

impl RemovalSettings {
    pub fn is_configured(&self) -> bool {
        self.endpoint.is_some() || self.stub_manifest.is_some()
    }

    pub fn segmentation(&self) -> SegmentationAdapterConfig {
        SegmentationAdapterConfig {
            endpoint: self.endpoint.clone(),
            stub_manifest: self.stub_manifest.clone(),
            timeout_secs: self.timeout_secs,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSettings {
    pub endpoint: Option<String>,
    pub timeout_secs: u64,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        Self {
            endpoint: None,
            timeout_secs: 120,
        }
    }
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads `path`; relative paths inside the file resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut s = Self::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        fix(&mut s.registry);
        fix(&mut s.templates);
        fix(&mut s.llm.fixture);
        fix(&mut s.session.state_dir);
        fix(&mut s.removal.stub_manifest);
        Ok(s)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        let s = Settings::parse("").unwrap();
        assert_eq!(s.llm.backend, BackendKind::Live);
        assert_eq!(s.session.history_turns, 8);
        assert!(!s.removal.is_configured());
    }

    #[test]
    fn sections_parse() {
        let s = Settings::parse(
            r#"
            [llm]
            backend = "scripted"
            fixture = "f.json"
            model_id = "local"
            [removal]
            stub_manifest = "m.json"
            metric = "iou"
            "#,
        )
        .unwrap();
        assert_eq!(s.llm.backend, BackendKind::Scripted);
        assert_eq!(s.llm.live.model_id, "local");
        assert_eq!(s.llm.live.base_url, LiveConfig::default().base_url);
        assert_eq!(OverlapMetric::from(s.removal.metric), OverlapMetric::Iou);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Settings::parse("[session]\nttl = 3").is_err());
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("photochat.toml");
        std::fs::write(&path, "registry = \"reg.json\"\n[llm]\nfixture = \"/abs/f.json\"\n").unwrap();
        let s = Settings::load(&path).unwrap();
        assert_eq!(s.registry.unwrap(), dir.path().join("reg.json"));
        assert_eq!(s.llm.fixture.unwrap(), PathBuf::from("/abs/f.json"));
    }
}
