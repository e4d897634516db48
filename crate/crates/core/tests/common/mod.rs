#![allow(dead_code)]

use std::path::PathBuf;

use photochat_core::eval::{load_dataset, EvalCase};
use photochat_core::llm::ScriptedBackend;

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join("eval")
}

pub fn dataset(name: &str) -> Vec<EvalCase> {
    load_dataset(fixture_dir().join(name)).expect("dataset loads")
}

pub fn scripted(name: &str) -> ScriptedBackend {
    ScriptedBackend::load(fixture_dir().join(name)).expect("fixture loads")
}
