//! Rewrites the committed offline fixtures from `fixtures/scenarios.json`.
//!
//! ```text
//! cargo run --example regenerate_fixtures            # write files
//! cargo run --example regenerate_fixtures -- --check  # fail if stale
//! ```

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use medcoder::config::AppConfig;
use medcoder::pipeline::Pipeline;
use medcoder::scripted::{dataset_jsonl, load_scenarios, record_fixtures, ScriptedLlm};

fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn main() -> Result<ExitCode, Box<dyn std::error::Error>> {
    let check = std::env::args().any(|a| a == "--check");
    let dir = fixtures_dir();
    let config = AppConfig::load(dir.join("medcoder.toml"))?;
    let scenarios = load_scenarios(dir.join("scenarios.json"))?;

    let ontology = Arc::new(config.load_ontology()?);
    let embedder = config.embedder()?;
    let index = Arc::new(config.index(&ontology, embedder.as_ref())?);
    let pipeline = Pipeline::new(ontology, Arc::new(ScriptedLlm::new(scenarios.clone()))).with_retrieval(index, embedder);
    let fixtures = record_fixtures(&scenarios, &pipeline, &config.pipeline)?;

    let outputs = [
        (dir.join("llm/responses.json"), fixtures.to_json()),
        (dir.join("error_analysis/records.jsonl"), dataset_jsonl(&scenarios, Some("error-analysis"))),
        (dir.join("ablation/records.jsonl"), dataset_jsonl(&scenarios, None)),
    ];
    let mut stale = 0;
    for (path, body) in &outputs {
        let current = std::fs::read_to_string(path).unwrap_or_default();
        if current == *body {
            println!("up to date  {}", path.display());
            continue;
        }
        stale += 1;
        if check {
            println!("stale       {}", path.display());
        } else {
            std::fs::write(path, body)?;
            println!("wrote       {}", path.display());
        }
    }
    println!("{} recorded LLM exchanges for {} scenarios", fixtures.len(), scenarios.len());
    Ok(if check && stale > 0 { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}
