//! Retrieves candidate codes for each extracted diagnosis, merges in the
//! prompted code when it is billable and asks the LLM for a permutation.
//!
//! ```text
//! cargo run --example rerank_candidates -- ea-depression
//! ```

use std::path::Path;

use medcoder::config::AppConfig;
use medcoder::evalkit::load_dataset;
use medcoder::extractor::{extract_record, GroundingConfig};
use medcoder::reranker::{rerank, RerankInput};
use medcoder::retriever::{merge_candidates, retrieve_for_extraction};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let config = AppConfig::load(dir.join("medcoder.toml"))?;
    let ontology = config.load_ontology()?;
    let llm = config.llm()?;
    let embedder = config.embedder()?;
    let index = config.index(&ontology, embedder.as_ref())?;
    let (extraction_template, rerank_template) = config.templates()?;
    let dataset = load_dataset(dir.join("ablation/records.jsonl"))?;

    let id = std::env::args().nth(1).unwrap_or_else(|| "ea-depression".into());
    let record = dataset.get(&id).ok_or_else(|| format!("no record {id}"))?;
    let model = &config.pipeline.rerank_model;
    let extracted = extract_record(
        &record.record_id,
        &record.text,
        &extraction_template,
        &config.pipeline.extraction_model,
        llm.as_ref(),
        &ontology,
        &GroundingConfig::default(),
    )?;

    for (i, x) in extracted.extractions.iter().enumerate() {
        let retrieved = retrieve_for_extraction(x, i, &index, embedder.as_ref(), config.pipeline.k_retrieve)?;
        let set = merge_candidates(x, i, &retrieved, &ontology);
        println!("{}  candidates {:?}", x.diagnosis, set.codes());
        let input = RerankInput::new(x.query_text(), x.evidence_sentences(), &set, &ontology);
        let ranked = rerank(&input, &rerank_template, model, llm.as_ref());
        println!("  reranked   {:?} repaired={} fallback={}", ranked.code_list(), ranked.repaired, ranked.fallback);
        if let Some(top) = ranked.codes.first() {
            println!("  top: {} {}", top.code, ontology.description(&top.code).unwrap_or_default());
        }
    }
    Ok(())
}
