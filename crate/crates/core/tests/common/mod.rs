#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use medcoder::config::AppConfig;
use medcoder::evalkit::{load_dataset, Dataset};
use medcoder::llm::LlmProvider;
use medcoder::ontology::Ontology;
use medcoder::pipeline::Pipeline;
use medcoder::scripted::{load_scenarios, Scenario};

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn config() -> AppConfig {
    AppConfig::load(fixtures_dir().join("medcoder.toml")).expect("fixture config loads")
}

/// Ontology, hashing index and replayed LLM responses.
pub fn offline_pipeline() -> Pipeline {
    config().pipeline().expect("offline pipeline builds")
}

/// The offline pipeline with a different LLM behind it.
pub fn pipeline_with_llm(llm: Arc<dyn LlmProvider>) -> Pipeline {
    offline_pipeline().with_llm(llm)
}

pub fn ontology() -> Ontology {
    config().load_ontology().expect("fixture ontology loads")
}

pub fn scenarios() -> Vec<Scenario> {
    load_scenarios(fixtures_dir().join("scenarios.json")).expect("scenarios load")
}

pub fn error_analysis() -> Dataset {
    load_dataset(fixtures_dir().join("error_analysis/records.jsonl")).expect("error-analysis fixture loads")
}

pub fn ablation() -> Dataset {
    load_dataset(fixtures_dir().join("ablation/records.jsonl")).expect("ablation fixture loads")
}
