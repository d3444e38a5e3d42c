//! The committed offline fixtures must match what the scripted scenarios
//! produce. Run `cargo run --example regenerate_fixtures` after editing them.

mod common;

use std::sync::Arc;

use medcoder::scripted::{dataset_jsonl, record_fixtures, ScriptedLlm};

fn committed(rel: &str) -> String {
    std::fs::read_to_string(common::fixtures_dir().join(rel)).unwrap()
}

#[test]
fn committed_fixtures_are_fresh() {
    let config = common::config();
    let scenarios = common::scenarios();
    let pipeline = common::pipeline_with_llm(Arc::new(ScriptedLlm::new(scenarios.clone())));
    let fixtures = record_fixtures(&scenarios, &pipeline, &config.pipeline).unwrap();

    assert!(committed("llm/responses.json") == fixtures.to_json(), "llm/responses.json is stale");
    assert_eq!(committed("error_analysis/records.jsonl"), dataset_jsonl(&scenarios, Some("error-analysis")));
    assert_eq!(committed("ablation/records.jsonl"), dataset_jsonl(&scenarios, None));
}

#[test]
fn scenario_ids_are_unique_and_grouped() {
    let scenarios = common::scenarios();
    let ids: std::collections::BTreeSet<_> = scenarios.iter().map(|s| s.record_id.as_str()).collect();
    assert_eq!(ids.len(), scenarios.len());
    assert_eq!(scenarios.iter().filter(|s| s.group == "error-analysis").count(), 4);
}
