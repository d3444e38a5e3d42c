//! Text embeddings and the exact cosine index over ICD-10 descriptions.

mod hashing;
mod index;
mod remote;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hashing::HashingEmbedder;
pub use index::{build_index, EntrySource, IndexEntry, SearchHit, VectorIndex, INDEX_MAGIC, INDEX_VERSION};
pub use remote::{RemoteEmbedder, RemoteEmbedderConfig, EMBED_API_KEY_ENV};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("malformed embedding response: {0}")]
    MalformedResponse(String),
    #[error("vector has zero norm")]
    ZeroVector,
    #[error("dimension mismatch: index has {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("ontology has no billable codes to index")]
    EmptyOntology,
    #[error("index file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A unit-normalized vector. `norm` is the Euclidean norm of the stored
/// `f32` values, computed in `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f32>,
    norm: f64,
}

impl EmbeddingVector {
    /// Normalizes `raw` to unit length.
    pub fn from_raw(raw: Vec<f32>) -> Result<Self, EmbeddingError> {
        let norm = l2(&raw);
        if norm == 0.0 || !norm.is_finite() {
            return Err(EmbeddingError::ZeroVector);
        }
        let values: Vec<f32> = raw.iter().map(|&v| (v as f64 / norm) as f32).collect();
        Ok(Self::from_stored(values))
    }

    /// Wraps values that are already normalized (e.g. read back from disk).
    pub(crate) fn from_stored(values: Vec<f32>) -> Self {
        let norm = l2(&values);
        Self { values, norm }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Cosine similarity computed in `f64`.
    pub fn cosine(&self, other: &Self) -> f64 {
        let dot: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum();
        dot / (self.norm * other.norm)
    }
}

fn l2(v: &[f32]) -> f64 {
    v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt()
}

/// Produces raw (not necessarily normalized) vectors. Implementations must be
/// safe to call from several threads at once.
pub trait EmbeddingProvider: Send + Sync {
    /// Stable identifier recorded in index files and run manifests.
    fn id(&self) -> String;

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbeddingError>;
}

/// Embeds one text and re-normalizes the provider output.
pub fn embed(text: &str, provider: &dyn EmbeddingProvider) -> Result<EmbeddingVector, EmbeddingError> {
    if text.trim().is_empty() {
        return Err(EmbeddingError::EmptyText);
    }
    let mut out = provider.embed_batch(&[text.to_string()])?;
    let raw = out
        .pop()
        .ok_or_else(|| EmbeddingError::MalformedResponse("no vector returned".into()))?;
    EmbeddingVector::from_raw(raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_raw_normalizes() {
        let v = EmbeddingVector::from_raw(vec![3.0, 4.0]).unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-6);
        assert!((v.values()[0] - 0.6).abs() < 1e-7);
        assert!(matches!(EmbeddingVector::from_raw(vec![0.0; 4]), Err(EmbeddingError::ZeroVector)));
    }

    #[test]
    fn empty_text_rejected() {
        let e = HashingEmbedder::new(16);
        assert!(matches!(embed("   ", &e), Err(EmbeddingError::EmptyText)));
    }
}
