use serde::{Deserialize, Serialize};

use super::levenshtein::levenshtein_chars;
use super::{fold, GroundingError};

pub const DEFAULT_FUZZY_THRESHOLD: f64 = 0.7;

/// A located piece of the record. `start..end` are byte offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedSpan {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub score: f64,
    pub grounded: bool,
}

impl GroundedSpan {
    pub fn ungrounded() -> Self {
        Self {
            text: String::new(),
            start: 0,
            end: 0,
            score: 0.0,
            grounded: false,
        }
    }

    /// True when the span slices `record` back to its own text.
    pub fn is_valid_for(&self, record: &str) -> bool {
        record.get(self.start..self.end) == Some(self.text.as_str())
    }
}

/// `1 - lev(lower(a), lower(b)) / max(|a|, |b|)` over characters.
pub fn normalized_similarity(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().map(fold).collect();
    let b: Vec<char> = b.chars().map(fold).collect();
    similarity_chars(&a, &b)
}

fn similarity_chars(a: &[char], b: &[char]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein_chars(a, b) as f64 / longest as f64
}

pub fn fuzzy_ground(query: &str, record_text: &str) -> Result<GroundedSpan, GroundingError> {
    fuzzy_ground_with(query, record_text, DEFAULT_FUZZY_THRESHOLD)
}

/// Finds the record substring closest to the query.
///
/// Candidates are windows that start and end on token boundaries with a
/// character length within half to one-and-a-half times the query length.
/// The best window wins; ties go to the earliest start, then the shortest
/// window. A verbatim case-insensitive occurrence that is not token-aligned
/// is used when no window matches exactly.
pub fn fuzzy_ground_with(
    query: &str,
    record_text: &str,
    threshold: f64,
) -> Result<GroundedSpan, GroundingError> {
    let query = query.trim();
    if query.is_empty() {
        return Err(GroundingError::EmptyQuery);
    }
    let q: Vec<char> = query.chars().map(fold).collect();
    let rec: Vec<(usize, char)> = record_text.char_indices().map(|(i, c)| (i, fold(c))).collect();
    let folded: Vec<char> = rec.iter().map(|&(_, c)| c).collect();
    let byte_at = |ci: usize| rec.get(ci).map_or(record_text.len(), |&(b, _)| b);

    let tokens = token_char_spans(&folded);
    let mut best: Option<(f64, usize, usize)> = None;
    for (i, &(start, _)) in tokens.iter().enumerate() {
        for &(_, end) in &tokens[i..] {
            let len = end - start;
            if 2 * len > 3 * q.len() {
                break;
            }
            if 2 * len < q.len() {
                continue;
            }
            let sim = similarity_chars(&q, &folded[start..end]);
            if best.is_none_or(|(b, _, _)| sim > b) {
                best = Some((sim, start, end));
            }
        }
    }

    if best.is_none_or(|(s, _, _)| s < 1.0) {
        if let Some(start) = find_subsequence(&folded, &q) {
            best = Some((1.0, start, start + q.len()));
        }
    }

    let Some((score, start, end)) = best else {
        return Ok(GroundedSpan::ungrounded());
    };
    let (bs, be) = (byte_at(start), byte_at(end));
    Ok(GroundedSpan {
        text: record_text[bs..be].to_string(),
        start: bs,
        end: be,
        score,
        grounded: score >= threshold,
    })
}

fn token_char_spans(chars: &[char]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in chars.iter().enumerate() {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, chars.len()));
    }
    spans
}

fn find_subsequence(hay: &[char], needle: &[char]) -> Option<usize> {
    if needle.len() > hay.len() {
        return None;
    }
    (0..=hay.len() - needle.len()).find(|&i| hay[i..i + needle.len()] == *needle)
}
