//! Runs extraction on one fixture record: prompt, parse the JSON answer and
//! ground every diagnosis and evidence snippet back into the note.
//!
//! ```text
//! cargo run --example extract_record -- ea-trigger-finger
//! ```

use std::path::Path;

use medcoder::config::AppConfig;
use medcoder::evalkit::load_dataset;
use medcoder::extractor::{extract_record, GroundingConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let config = AppConfig::load(dir.join("medcoder.toml"))?;
    let ontology = config.load_ontology()?;
    let llm = config.llm()?;
    let (template, _) = config.templates()?;
    let dataset = load_dataset(dir.join("ablation/records.jsonl"))?;

    let id = std::env::args().nth(1).unwrap_or_else(|| "ea-trigger-finger".into());
    let record = dataset.get(&id).ok_or_else(|| format!("no record {id}"))?;
    let result = extract_record(
        &record.record_id,
        &record.text,
        &template,
        &config.pipeline.extraction_model,
        llm.as_ref(),
        &ontology,
        &GroundingConfig::default(),
    )?;

    println!("reasoning: {}", result.reasoning_text.trim());
    for x in &result.extractions {
        let span = &x.diagnosis_span;
        println!("- {}", x.diagnosis);
        if span.grounded {
            println!("  span {}..{} {:?} (score {:.3})", span.start, span.end, span.text, span.score);
        } else {
            println!("  not grounded in the note");
        }
        println!("  prompted code {:?} valid={}", x.prompted_code, x.prompted_code_valid);
        for ev in &x.evidence {
            println!("  evidence {:?} -> {:?}", ev.raw, ev.span.text);
        }
    }
    Ok(())
}
