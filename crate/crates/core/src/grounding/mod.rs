//! Anchoring LLM output back into the source record.
//!
//! Diagnoses are located with a fuzzy, token-aligned window search; supporting
//! evidence is replaced by the best BM25-scoring sentence of the record.

mod bm25;
mod fuzzy;
mod levenshtein;
mod segment;

pub use bm25::{bm25_top_sentences, Bm25Params, ScoredSentence};
pub use fuzzy::{fuzzy_ground, fuzzy_ground_with, normalized_similarity, GroundedSpan, DEFAULT_FUZZY_THRESHOLD};
pub use levenshtein::{levenshtein, levenshtein_chars};
pub use segment::{segment_sentences, Sentence, SentenceIndex};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroundingError {
    #[error("fuzzy grounding query is empty")]
    EmptyQuery,
}

/// Lowercase alphanumeric runs. No stemming, no stopword removal.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Single-character case fold used for all case-insensitive comparisons.
pub(crate) fn fold(c: char) -> char {
    c.to_lowercase().next().unwrap_or(c)
}
