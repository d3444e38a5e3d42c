//! Runs every pipeline mode over the ablation fixture and prints the
//! code-level precision, recall and F1 at each cutoff as CSV.
//!
//! ```text
//! cargo run --example ablation_sweep > curve.csv
//! ```

use std::path::Path;

use medcoder::config::AppConfig;
use medcoder::evalkit::{curve_at_k, curve_to_csv, load_dataset, sweep_from_run};
use medcoder::pipeline::{Mode, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let config = AppConfig::load(dir.join("medcoder.toml"))?;
    let pipeline = config.pipeline()?;
    let gold = load_dataset(dir.join("ablation/records.jsonl"))?;
    let records = gold.medical_records();
    let ks: Vec<usize> = (1..=10).collect();

    let mut rows = Vec::new();
    for mode in Mode::ALL {
        // One run at the largest cutoff; smaller cutoffs are prefixes of it.
        let run_config = PipelineConfig {
            mode,
            k: *ks.last().unwrap(),
            ..config.pipeline.clone()
        };
        let batch = pipeline.run_batch(&records, &run_config)?;
        eprintln!("{mode}: {} records ok, {} failed", batch.manifest.succeeded, batch.manifest.failed);
        let by_k = sweep_from_run(&batch.results, &ks)?;
        rows.extend(curve_at_k(&by_k, &gold, &ks)?);
    }
    print!("{}", curve_to_csv(&rows));
    Ok(())
}
