//! Replays recorded LLM exchanges. Requests are matched by the SHA-256 of
//! their canonical messages, so an unrecorded prompt is an error rather
//! than a guess.
//!
//! ```text
//! cargo run --example mock_llm_replay
//! ```

use std::path::Path;

use medcoder::evalkit::load_dataset;
use medcoder::extractor::build_extraction_prompt;
use medcoder::llm::{complete, MockProvider};
use medcoder::prompt::PromptTemplate;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mock = MockProvider::from_file(dir.join("llm/responses.json"))?;
    let records = load_dataset(dir.join("error_analysis/records.jsonl"))?;
    let template = PromptTemplate::extraction_default();

    let record = &records.records[0];
    let request = build_extraction_prompt(&record.text, &template, "gpt-4")?;
    println!("record {} request hash {}", record.record_id, request.request_hash());
    let response = complete(&request, &mock)?;
    println!("{}", response.text);

    let unseen = build_extraction_prompt("A note nobody recorded.", &template, "gpt-4")?;
    match complete(&unseen, &mock) {
        Ok(_) => println!("unexpected hit"),
        Err(e) => println!("unrecorded prompt: {e}"),
    }
    println!("{} provider calls", mock.calls());
    Ok(())
}
