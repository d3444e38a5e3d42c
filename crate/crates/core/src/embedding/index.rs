use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EmbeddingError, EmbeddingProvider, EmbeddingVector};
use crate::ontology::Ontology;

pub const INDEX_MAGIC: [u8; 4] = *b"MCIX";
pub const INDEX_VERSION: u32 = 1;

const EMBED_BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EntrySource {
    Description,
    Synonym,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub code: String,
    pub description: String,
    pub chapter: String,
    pub block: String,
    pub category: String,
    pub source: EntrySource,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub code: String,
    pub score: f64,
    pub matched_description: String,
    pub source: EntrySource,
    pub chapter: String,
    pub block: String,
    pub category: String,
}

/// Exact full-scan cosine index. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    embedder_id: String,
    entries: Vec<IndexEntry>,
}

/// One entry per (billable code, description) and per (billable code, synonym).
pub fn build_index(ontology: &Ontology, provider: &dyn EmbeddingProvider) -> Result<VectorIndex, EmbeddingError> {
    let mut pending = Vec::new();
    for code in ontology.billable_codes() {
        pending.push((code, code.description.clone(), EntrySource::Description));
        for syn in ontology.synonyms(&code.code) {
            pending.push((code, syn.clone(), EntrySource::Synonym));
        }
    }
    if pending.is_empty() {
        return Err(EmbeddingError::EmptyOntology);
    }
    let texts: Vec<String> = pending.iter().map(|(_, t, _)| t.clone()).collect();
    let batches: Vec<Vec<Vec<f32>>> = texts
        .par_chunks(EMBED_BATCH)
        .map(|chunk| {
            let out = provider.embed_batch(chunk)?;
            if out.len() != chunk.len() {
                return Err(EmbeddingError::MalformedResponse(format!(
                    "expected {} vectors, got {}",
                    chunk.len(),
                    out.len()
                )));
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;
    let entries = pending
        .into_iter()
        .zip(batches.into_iter().flatten())
        .map(|((code, description, source), raw)| {
            Ok(IndexEntry {
                code: code.code.clone(),
                description,
                chapter: code.chapter.clone(),
                block: code.block.clone(),
                category: code.category.clone(),
                source,
                vector: EmbeddingVector::from_raw(raw)?,
            })
        })
        .collect::<Result<Vec<_>, EmbeddingError>>()?;
    VectorIndex::from_entries(provider.id(), entries)
}

impl VectorIndex {
    pub fn from_entries(embedder_id: impl Into<String>, entries: Vec<IndexEntry>) -> Result<Self, EmbeddingError> {
        let dim = entries.first().map_or(0, |e| e.vector.dim());
        if let Some(bad) = entries.iter().find(|e| e.vector.dim() != dim) {
            return Err(EmbeddingError::DimensionMismatch {
                expected: dim,
                found: bad.vector.dim(),
            });
        }
        Ok(Self {
            dim,
            embedder_id: embedder_id.into(),
            entries,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Exact top-k by cosine, one hit per code (its best-scoring entry).
    /// Ties are ordered by code.
    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<SearchHit>, EmbeddingError> {
        if query.dim() != self.dim && !self.entries.is_empty() {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.dim,
                found: query.dim(),
            });
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut best: HashMap<&str, (f64, usize)> = HashMap::new();
        for (i, entry) in self.entries.iter().enumerate() {
            let score = entry.vector.cosine(query);
            best.entry(entry.code.as_str())
                .and_modify(|slot| {
                    if score > slot.0 {
                        *slot = (score, i);
                    }
                })
                .or_insert((score, i));
        }
        let mut ranked: Vec<(f64, usize)> = best.into_values().collect();
        ranked.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| self.entries[a.1].code.cmp(&self.entries[b.1].code))
        });
        ranked.truncate(k);
        Ok(ranked
            .into_iter()
            .map(|(score, i)| {
                let e = &self.entries[i];
                SearchHit {
                    code: e.code.clone(),
                    score,
                    matched_description: e.description.clone(),
                    source: e.source,
                    chapter: e.chapter.clone(),
                    block: e.block.clone(),
                    category: e.category.clone(),
                }
            })
            .collect())
    }

    /// Layout (little-endian): magic, version u32, dimension u32, entry count u32,
    /// embedder id; then per entry code, description, chapter, block, category,
    /// source u8 and `dimension` f32 values. Strings are u32 length + UTF-8.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.entries.len() * (self.dim * 4 + 64));
        out.extend_from_slice(&INDEX_MAGIC);
        out.extend_from_slice(&INDEX_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        put_str(&mut out, &self.embedder_id);
        for e in &self.entries {
            for s in [&e.code, &e.description, &e.chapter, &e.block, &e.category] {
                put_str(&mut out, s);
            }
            out.push(match e.source {
                EntrySource::Description => 0,
                EntrySource::Synonym => 1,
            });
            for v in e.vector.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EmbeddingError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != INDEX_MAGIC {
            return Err(EmbeddingError::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != INDEX_VERSION {
            return Err(EmbeddingError::Format(format!("unsupported version {version}")));
        }
        let dim = r.u32()? as usize;
        let count = r.u32()? as usize;
        let embedder_id = r.string()?;
        let mut entries = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let code = r.string()?;
            let description = r.string()?;
            let chapter = r.string()?;
            let block = r.string()?;
            let category = r.string()?;
            let source = match r.take(1)?[0] {
                0 => EntrySource::Description,
                1 => EntrySource::Synonym,
                other => return Err(EmbeddingError::Format(format!("bad source tag {other}"))),
            };
            let raw = r.take(dim * 4)?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            entries.push(IndexEntry {
                code,
                description,
                chapter,
                block,
                category,
                source,
                vector: EmbeddingVector::from_stored(values),
            });
        }
        if r.pos != bytes.len() {
            return Err(EmbeddingError::Format("trailing bytes".into()));
        }
        Ok(Self {
            dim,
            embedder_id,
            entries,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EmbeddingError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmbeddingError> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], EmbeddingError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| EmbeddingError::Format("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, EmbeddingError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self) -> Result<String, EmbeddingError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| EmbeddingError::Format(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::super::{embed, HashingEmbedder};
    use super::*;

    fn ontology() -> Ontology {
        Ontology::parse_code_table([
            "F32.A\t1\tDepression, unsp\tDepression, unspecified",
            "F33.9\t1\tMdd, recur, unsp\tMajor depressive disorder, recurrent, unspecified",
            "S80.01\t0\tContusion of right knee\tContusion of right knee",
            "S80.01XA\t1\tContusion of right knee, init\tContusion of right knee, initial encounter",
        ])
        .unwrap()
        .with_synonyms(["F32.A\tDepression NOS", "S80.01XA\tBruise of right knee"])
        .unwrap()
    }

    #[test]
    fn three_billable_plus_two_synonyms() {
        let idx = build_index(&ontology(), &HashingEmbedder::new(64)).unwrap();
        assert_eq!(idx.len(), 5);
        assert!(idx.entries().iter().all(|e| e.code != "S80.01"));
    }

    #[test]
    fn empty_ontology_rejected() {
        let err = build_index(&Ontology::default(), &HashingEmbedder::new(8));
        assert!(matches!(err, Err(EmbeddingError::EmptyOntology)));
    }

    #[test]
    fn self_similarity_ranks_first() {
        let e = HashingEmbedder::new(128);
        let idx = build_index(&ontology(), &e).unwrap();
        let q = embed("Depression, unspecified", &e).unwrap();
        let hits = idx.search(&q, 3).unwrap();
        assert_eq!(hits[0].code, "F32.A");
        assert!((hits[0].score - 1.0).abs() < 1e-6);
        assert_eq!(hits[0].chapter, "V");
        assert_eq!(hits[0].category, "F32");
    }

    #[test]
    fn dedups_and_bounds() {
        let e = HashingEmbedder::new(128);
        let idx = build_index(&ontology(), &e).unwrap();
        let q = embed("depression", &e).unwrap();
        let hits = idx.search(&q, 50).unwrap();
        assert_eq!(hits.len(), 3);
        let mut codes: Vec<_> = hits.iter().map(|h| h.code.clone()).collect();
        codes.dedup();
        assert_eq!(codes.len(), 3);
        assert!(hits.windows(2).all(|w| w[0].score >= w[1].score));
        assert!(idx.search(&q, 0).unwrap().is_empty());
    }

    #[test]
    fn dimension_mismatch() {
        let idx = build_index(&ontology(), &HashingEmbedder::new(64)).unwrap();
        let q = embed("depression", &HashingEmbedder::new(32)).unwrap();
        assert!(matches!(
            idx.search(&q, 1),
            Err(EmbeddingError::DimensionMismatch { expected: 64, found: 32 })
        ));
    }

    #[test]
    fn bytes_round_trip_identically() {
        let idx = build_index(&ontology(), &HashingEmbedder::new(64)).unwrap();
        let bytes = idx.to_bytes();
        let back = VectorIndex::from_bytes(&bytes).unwrap();
        assert_eq!(back, idx);
        assert_eq!(back.to_bytes(), bytes);
        let rebuilt = build_index(&ontology(), &HashingEmbedder::new(64)).unwrap();
        assert_eq!(rebuilt.to_bytes(), bytes);
    }

    #[test]
    fn corrupt_files_rejected() {
        let idx = build_index(&ontology(), &HashingEmbedder::new(8)).unwrap();
        let bytes = idx.to_bytes();
        assert!(VectorIndex::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(VectorIndex::from_bytes(&bad).is_err());
    }
}
