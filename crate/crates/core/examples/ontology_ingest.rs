//! Loads the fixture code table with synonyms and blocks, then shows code
//! normalization, hierarchy and the billable check.
//!
//! ```text
//! cargo run --example ontology_ingest
//! ```

use std::path::Path;

use medcoder::config::load_ontology_files;
use medcoder::ontology::{derive_hierarchy, normalize_code, validate_code_format};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/ontology");
    let ontology = load_ontology_files(
        &dir.join("codes.tsv"),
        Some(&dir.join("synonyms.tsv")),
        Some(&dir.join("blocks.tsv")),
    )?;
    println!(
        "{} codes, {} billable, {} synonyms",
        ontology.len(),
        ontology.billable_codes().count(),
        ontology.synonym_count()
    );

    for raw in ["s8001xa", "S80.01", "M75.40", "f32a"] {
        let code = normalize_code(raw);
        let (category, _) = derive_hierarchy(&code)?;
        match ontology.get(&code) {
            Some(c) => println!(
                "{raw:>8} -> {code:<9} chapter {:<5} block {:<8} billable={} {}",
                c.chapter, c.block, c.billable, c.description
            ),
            None => println!(
                "{raw:>8} -> {code:<9} category {category}, well-formed={}, not in the table",
                validate_code_format(&code)
            ),
        }
    }
    println!("synonyms of F32.A: {:?}", ontology.synonyms("F32.A"));
    Ok(())
}
