//! Replays the four error-analysis records in FULL mode at k=1 and scores
//! codes, diagnoses and evidence against the annotations.
//!
//! ```text
//! cargo run --example evaluate_error_analysis
//! ```

use std::path::Path;

use medcoder::config::AppConfig;
use medcoder::evalkit::{evaluate, load_dataset, EvaluateOptions};
use medcoder::pipeline::{Mode, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let config = AppConfig::load(dir.join("medcoder.toml"))?;
    let pipeline = config.pipeline()?;
    let gold = load_dataset(dir.join("error_analysis/records.jsonl"))?;
    let run_config = PipelineConfig {
        mode: Mode::Full,
        k: 1,
        ..config.pipeline.clone()
    };
    let batch = pipeline.run_batch(&gold.medical_records(), &run_config)?;

    for r in &batch.results {
        let expected: Vec<&str> = gold.get(&r.record_id).map(|g| g.gold.iter().map(|a| a.icd_code.as_str()).collect()).unwrap_or_default();
        println!("{:<24} predicted {:?} gold {:?}", r.record_id, r.predicted_set, expected);
    }
    let report = evaluate(&batch.results, &gold, &EvaluateOptions::default())?;
    for (name, m) in [("codes", &report.codes), ("diagnoses", &report.diagnoses), ("evidence", &report.evidence)] {
        println!(
            "{name:<10} tp={} fp={} fn={}  P={:.3} R={:.3} F1={:.3}",
            m.tp, m.fp, m.fn_, m.micro_precision, m.micro_recall, m.micro_f1
        );
    }
    Ok(())
}
