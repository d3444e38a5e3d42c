//! Per-diagnosis candidate codes from semantic search, merged with the code
//! the extraction prompt proposed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{embed, EmbeddingError, EmbeddingProvider, VectorIndex};
use crate::extractor::Extraction;
use crate::ontology::Ontology;

pub const DEFAULT_K_RETRIEVE: usize = 10;

#[derive(Debug, Error)]
pub enum RetrieveError {
    #[error("diagnosis text is empty")]
    EmptyDiagnosis,
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CandidateSource {
    Prompted,
    Retrieved,
    Both,
}

/// `retrieval_score` is `Some` iff `source` is `Retrieved` or `Both`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub code: String,
    pub source: CandidateSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval_score: Option<f64>,
    pub diagnosis_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub diagnosis_index: usize,
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn codes(&self) -> Vec<&str> {
        self.candidates.iter().map(|c| c.code.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// Top-`k_retrieve` codes for one diagnosis, in index order.
pub fn retrieve_for_diagnosis(
    diagnosis_text: &str,
    diagnosis_index: usize,
    index: &VectorIndex,
    provider: &dyn EmbeddingProvider,
    k_retrieve: usize,
) -> Result<Vec<Candidate>, RetrieveError> {
    if diagnosis_text.trim().is_empty() {
        return Err(RetrieveError::EmptyDiagnosis);
    }
    if k_retrieve == 0 {
        return Ok(Vec::new());
    }
    let query = embed(diagnosis_text, provider)?;
    Ok(index
        .search(&query, k_retrieve)?
        .into_iter()
        .map(|hit| Candidate {
            code: hit.code,
            source: CandidateSource::Retrieved,
            retrieval_score: Some(hit.score),
            diagnosis_index,
        })
        .collect())
}

/// Retrieves with the grounded span text, or the LLM surface form when ungrounded.
pub fn retrieve_for_extraction(
    extraction: &Extraction,
    diagnosis_index: usize,
    index: &VectorIndex,
    provider: &dyn EmbeddingProvider,
    k_retrieve: usize,
) -> Result<Vec<Candidate>, RetrieveError> {
    retrieve_for_diagnosis(extraction.query_text(), diagnosis_index, index, provider, k_retrieve)
}

/// Valid prompted code first, then retrieval order. Non-billable and
/// duplicate codes are dropped.
pub fn merge_candidates(
    extraction: &Extraction,
    diagnosis_index: usize,
    retrieved: &[Candidate],
    ontology: &Ontology,
) -> CandidateSet {
    let mut candidates: Vec<Candidate> = Vec::with_capacity(retrieved.len() + 1);
    if let Some(code) = extraction.valid_prompted_code().filter(|c| ontology.is_valid_billable(c)) {
        let hit = retrieved.iter().find(|c| c.code == code);
        candidates.push(Candidate {
            code: code.to_string(),
            source: if hit.is_some() {
                CandidateSource::Both
            } else {
                CandidateSource::Prompted
            },
            retrieval_score: hit.and_then(|c| c.retrieval_score),
            diagnosis_index,
        });
    }
    for c in retrieved {
        if !ontology.is_valid_billable(&c.code) || candidates.iter().any(|x| x.code == c.code) {
            continue;
        }
        candidates.push(Candidate {
            diagnosis_index,
            ..c.clone()
        });
    }
    CandidateSet {
        diagnosis_index,
        candidates,
    }
}
