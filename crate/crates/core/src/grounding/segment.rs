use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::bm25::Bm25Params;
use super::tokenize;

/// Words that keep a trailing period inside the sentence.
const ABBREVIATIONS: &[&str] = &[
    "dr", "mr", "mrs", "ms", "prof", "sr", "jr", "st", "vs", "e.g", "i.e", "approx", "pt", "hx",
];

/// One sentence of a record. `start..end` are byte offsets into the record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

/// Sentences of one record together with the BM25 statistics over them.
#[derive(Debug, Clone)]
pub struct SentenceIndex {
    sentences: Vec<Sentence>,
    params: Bm25Params,
    df: BTreeMap<String, usize>,
    avg_len: f64,
    term_freqs: Vec<HashMap<String, usize>>,
    lengths: Vec<usize>,
}

impl SentenceIndex {
    pub fn build(record_text: &str, params: Bm25Params) -> Self {
        let sentences = split(record_text);
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        let mut term_freqs = Vec::with_capacity(sentences.len());
        let mut lengths = Vec::with_capacity(sentences.len());
        for s in &sentences {
            let tokens = tokenize(&s.text);
            lengths.push(tokens.len());
            let mut tf: HashMap<String, usize> = HashMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for term in tf.keys() {
                *df.entry(term.clone()).or_default() += 1;
            }
            term_freqs.push(tf);
        }
        let avg_len = if lengths.is_empty() {
            0.0
        } else {
            lengths.iter().sum::<usize>() as f64 / lengths.len() as f64
        };
        Self {
            sentences,
            params,
            df,
            avg_len,
            term_freqs,
            lengths,
        }
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.df.get(term).copied().unwrap_or(0)
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub(super) fn term_frequency(&self, sentence: usize, term: &str) -> usize {
        self.term_freqs[sentence].get(term).copied().unwrap_or(0)
    }

    pub(super) fn length(&self, sentence: usize) -> usize {
        self.lengths[sentence]
    }
}

/// Splits on `.`, `!`, `?` followed by whitespace (or end of text) and on newlines.
pub fn segment_sentences(record_text: &str) -> SentenceIndex {
    SentenceIndex::build(record_text, Bm25Params::default())
}

fn split(text: &str) -> Vec<Sentence> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut start: Option<usize> = None;
    let mut i = 0;
    let push = |out: &mut Vec<Sentence>, from: usize, to: usize| {
        let raw = &text[from..to];
        let trimmed_start = from + (raw.len() - raw.trim_start().len());
        let trimmed_end = to - (raw.len() - raw.trim_end().len());
        if trimmed_start < trimmed_end {
            out.push(Sentence {
                start: trimmed_start,
                end: trimmed_end,
                text: text[trimmed_start..trimmed_end].to_string(),
            });
        }
    };
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c == '\n' {
            if let Some(s) = start.take() {
                push(&mut out, s, pos);
            }
            i += 1;
            continue;
        }
        if start.is_none() && !c.is_whitespace() {
            start = Some(pos);
        }
        if matches!(c, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && matches!(chars[j].1, '.' | '!' | '?' | '"' | '\'' | ')' | ']') {
                j += 1;
            }
            let at_break = j == chars.len() || chars[j].1.is_whitespace();
            if at_break && !(c == '.' && j == i + 1 && is_abbreviation(&chars[..i])) {
                let end = chars.get(j).map_or(text.len(), |&(p, _)| p);
                if let Some(s) = start.take() {
                    push(&mut out, s, end);
                }
            }
            i = j;
            continue;
        }
        i += 1;
    }
    if let Some(s) = start {
        push(&mut out, s, text.len());
    }
    out
}

fn is_abbreviation(before: &[(usize, char)]) -> bool {
    let word: String = before
        .iter()
        .rev()
        .take_while(|(_, c)| c.is_alphanumeric() || *c == '.')
        .map(|(_, c)| c.to_ascii_lowercase())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    ABBREVIATIONS.contains(&word.as_str())
}
