use serde::{Deserialize, Serialize};

use super::segment::{Sentence, SentenceIndex};
use super::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.5, b: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSentence<'a> {
    pub index: usize,
    pub sentence: &'a Sentence,
    pub score: f64,
}

impl SentenceIndex {
    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`, always positive.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.len() as f64;
        let df = self.document_frequency(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Okapi BM25 of the query against one sentence. Repeated query tokens
    /// contribute once per occurrence.
    pub fn score(&self, query_tokens: &[String], sentence: usize) -> f64 {
        let Bm25Params { k1, b } = self.params();
        let len = self.length(sentence) as f64;
        let norm = if self.avg_len() > 0.0 {
            1.0 - b + b * len / self.avg_len()
        } else {
            1.0
        };
        query_tokens
            .iter()
            .map(|t| {
                let tf = self.term_frequency(sentence, t) as f64;
                if tf == 0.0 {
                    0.0
                } else {
                    self.idf(t) * tf * (k1 + 1.0) / (tf + k1 * norm)
                }
            })
            .sum()
    }

    /// Up to `n` sentences sharing at least one term with the query, by
    /// descending score; ties go to the earlier sentence.
    pub fn top_sentences(&self, query: &str, n: usize) -> Vec<ScoredSentence<'_>> {
        let tokens = tokenize(query);
        if tokens.is_empty() || n == 0 {
            return Vec::new();
        }
        let mut scored: Vec<ScoredSentence<'_>> = (0..self.len())
            .filter(|&i| tokens.iter().any(|t| self.term_frequency(i, t) > 0))
            .map(|i| ScoredSentence {
                index: i,
                sentence: &self.sentences()[i],
                score: self.score(&tokens, i),
            })
            .collect();
        scored.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));
        scored.truncate(n);
        scored
    }
}

pub fn bm25_top_sentences<'a>(query: &str, index: &'a SentenceIndex, n: usize) -> Vec<ScoredSentence<'a>> {
    index.top_sentences(query, n)
}
