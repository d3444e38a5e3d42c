//! Builds the billable-code index with the offline hashing embedder,
//! searches it and round-trips it through the binary index format.
//!
//! ```text
//! cargo run --example vector_search -- "left shoulder impingement"
//! ```

use std::path::Path;

use medcoder::config::load_ontology_files;
use medcoder::embedding::{build_index, embed, EmbeddingProvider, HashingEmbedder, VectorIndex};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/ontology");
    let ontology = load_ontology_files(&dir.join("codes.tsv"), Some(&dir.join("synonyms.tsv")), None)?;
    let embedder = HashingEmbedder::default();
    let index = build_index(&ontology, &embedder)?;
    println!("{} entries, dim {}, embedder {}", index.len(), index.dim(), embedder.id());

    let queries: Vec<String> = match std::env::args().skip(1).collect::<Vec<_>>() {
        q if q.is_empty() => vec!["left shoulder impingement".into(), "depression".into(), "knee contusion".into()],
        q => q,
    };
    for q in &queries {
        println!("{q}");
        for hit in index.search(&embed(q, &embedder)?, 5)? {
            println!("  {:.4}  {:<9} {}", hit.score, hit.code, ontology.description(&hit.code).unwrap_or_default());
        }
    }

    let path = std::env::temp_dir().join("medcoder-example.mcix");
    index.save(&path)?;
    let loaded = VectorIndex::load(&path)?;
    println!("reloaded {} entries from {}", loaded.len(), path.display());
    std::fs::remove_file(&path)?;
    Ok(())
}
