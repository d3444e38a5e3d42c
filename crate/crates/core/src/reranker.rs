//! Listwise LLM re-ranking of one diagnosis' candidate codes.
//!
//! Candidates are shown as `[i] CODE: description` and the model answers with
//! a permutation string `[i] > [j] > ...`. Malformed answers are repaired into
//! a full permutation rather than rejected.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{complete, ChatMessage, ChatRequest, LlmProvider};
use crate::ontology::Ontology;
use crate::prompt::{PromptError, PromptTemplate};
use crate::retriever::{Candidate, CandidateSet, CandidateSource};

pub const RERANK_SYSTEM_PROMPT: &str =
    "You are an intelligent assistant that ranks ICD-10-CM codes by how well they fit a diagnosis.";
pub const NO_EVIDENCE_MARKER: &str = "(no supporting evidence)";

static BRACKETED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[(\d+)\]").expect("valid regex"));

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RerankError {
    #[error("no candidates to rank")]
    EmptyCandidates,
    #[error(transparent)]
    Template(#[from] PromptError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerankInput {
    pub diagnosis_index: usize,
    pub diagnosis: String,
    pub evidence_sentences: Vec<String>,
    /// Candidate `i` is shown as `[i+1]`.
    pub candidates: Vec<Candidate>,
    /// Ontology description per candidate, same order.
    pub descriptions: Vec<String>,
}

impl RerankInput {
    pub fn new(
        diagnosis: impl Into<String>,
        evidence_sentences: Vec<String>,
        set: &CandidateSet,
        ontology: &Ontology,
    ) -> Self {
        let descriptions = set
            .candidates
            .iter()
            .map(|c| ontology.description(&c.code).unwrap_or_default().to_string())
            .collect();
        Self {
            diagnosis_index: set.diagnosis_index,
            diagnosis: diagnosis.into(),
            evidence_sentences,
            candidates: set.candidates.clone(),
            descriptions,
        }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn render_candidates(&self) -> String {
        self.candidates
            .iter()
            .zip(&self.descriptions)
            .enumerate()
            .map(|(i, (c, d))| format!("[{}] {}: {}", i + 1, c.code, d))
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn render_evidence(&self) -> String {
        let lines: Vec<String> = self
            .evidence_sentences
            .iter()
            .filter(|s| !s.trim().is_empty())
            .map(|s| format!("- {}", s.trim()))
            .collect();
        if lines.is_empty() {
            NO_EVIDENCE_MARKER.to_string()
        } else {
            lines.join("\n")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCode {
    pub code: String,
    /// 1-based.
    pub rank: usize,
    pub source: CandidateSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCodes {
    pub diagnosis_index: usize,
    pub codes: Vec<RankedCode>,
    #[serde(default)]
    pub rerank_raw: String,
    #[serde(default)]
    pub repaired: bool,
    #[serde(default)]
    pub fallback: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RankedCodes {
    /// Candidates kept in their incoming order.
    pub fn in_order(diagnosis_index: usize, candidates: &[Candidate]) -> Self {
        Self::permuted(diagnosis_index, candidates, &(1..=candidates.len()).collect::<Vec<_>>())
    }

    /// `order` holds 1-based candidate ids.
    fn permuted(diagnosis_index: usize, candidates: &[Candidate], order: &[usize]) -> Self {
        let codes = order
            .iter()
            .enumerate()
            .map(|(rank, &id)| {
                let c = &candidates[id - 1];
                RankedCode {
                    code: c.code.clone(),
                    rank: rank + 1,
                    source: c.source,
                    retrieval_score: c.retrieval_score,
                }
            })
            .collect();
        Self {
            diagnosis_index,
            codes,
            rerank_raw: String::new(),
            repaired: false,
            fallback: false,
            error: None,
        }
    }

    pub fn code_list(&self) -> Vec<&str> {
        self.codes.iter().map(|c| c.code.as_str()).collect()
    }

    /// First `k` codes, ranks unchanged.
    pub fn truncated(&self, k: usize) -> Self {
        let mut out = self.clone();
        out.codes.truncate(k);
        out
    }
}

pub fn build_rerank_prompt(
    input: &RerankInput,
    template: &PromptTemplate,
    model: &str,
) -> Result<ChatRequest, RerankError> {
    if input.is_empty() {
        return Err(RerankError::EmptyCandidates);
    }
    template.require(&["diagnosis", "candidates"])?;
    let num = input.len().to_string();
    let user = template.render(&[
        ("diagnosis", input.diagnosis.as_str()),
        ("evidence", &input.render_evidence()),
        ("num", &num),
        ("candidates", &input.render_candidates()),
    ]);
    Ok(ChatRequest::new(
        model,
        vec![ChatMessage::system(RERANK_SYSTEM_PROMPT), ChatMessage::user(user)],
    ))
}

/// Full permutation of `1..=n` read from bracketed ids. The flag reports
/// whether anything had to be dropped or appended.
pub fn parse_permutation(llm_text: &str, n: usize) -> (Vec<usize>, bool) {
    let mut seen = vec![false; n + 1];
    let mut order = Vec::with_capacity(n);
    let mut repaired = false;
    for cap in BRACKETED.captures_iter(llm_text) {
        match cap[1].parse::<usize>() {
            Ok(id) if (1..=n).contains(&id) && !seen[id] => {
                seen[id] = true;
                order.push(id);
            }
            _ => repaired = true,
        }
    }
    for id in 1..=n {
        if !seen[id] {
            order.push(id);
            repaired = true;
        }
    }
    (order, repaired)
}

/// Never fails: provider errors fall back to the incoming order.
pub fn rerank(input: &RerankInput, template: &PromptTemplate, model: &str, provider: &dyn LlmProvider) -> RankedCodes {
    let n = input.len();
    if n <= 1 {
        return RankedCodes::in_order(input.diagnosis_index, &input.candidates);
    }
    let outcome = build_rerank_prompt(input, template, model)
        .map_err(|e| e.to_string())
        .and_then(|req| complete(&req, provider).map_err(|e| e.to_string()));
    match outcome {
        Ok(response) => {
            let (order, repaired) = parse_permutation(&response.text, n);
            let mut ranked = RankedCodes::permuted(input.diagnosis_index, &input.candidates, &order);
            ranked.rerank_raw = response.text;
            ranked.repaired = repaired;
            ranked
        }
        Err(message) => {
            tracing::warn!(diagnosis = input.diagnosis_index, %message, "rerank failed, keeping candidate order");
            let mut ranked = RankedCodes::in_order(input.diagnosis_index, &input.candidates);
            ranked.fallback = true;
            ranked.error = Some(message);
            ranked
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{FnProvider, LlmError};

    fn ontology() -> Ontology {
        Ontology::parse_code_table([
            "F32.9\t1\tMdd\tMajor depressive disorder, single episode, unspecified",
            "F32.A\t1\tDepression\tDepression, unspecified",
            "F33.9\t1\tMdd recurrent\tMajor depressive disorder, recurrent, unspecified",
        ])
        .unwrap()
    }

    fn set(codes: &[&str]) -> CandidateSet {
        CandidateSet {
            diagnosis_index: 0,
            candidates: codes
                .iter()
                .map(|c| Candidate {
                    code: c.to_string(),
                    source: CandidateSource::Retrieved,
                    retrieval_score: Some(0.5),
                    diagnosis_index: 0,
                })
                .collect(),
        }
    }

    fn input(codes: &[&str], evidence: Vec<String>) -> RerankInput {
        RerankInput::new("depression", evidence, &set(codes), &ontology())
    }

    #[test]
    fn prompt_lists_each_id_once() {
        let req = build_rerank_prompt(
            &input(&["F32.9", "F32.A", "F33.9"], vec!["well managed on Effexor".into()]),
            &PromptTemplate::rerank_default(),
            "m",
        )
        .unwrap();
        let user = req.last_user_message().unwrap();
        for id in ["[1]", "[2]", "[3]"] {
            assert_eq!(user.matches(id).count(), 1, "{id}");
        }
        assert!(user.contains("[2] F32.A: Depression, unspecified"));
        assert!(user.contains("well managed on Effexor"));
    }

    #[test]
    fn empty_evidence_marker_and_empty_candidates() {
        let i = input(&["F32.9", "F32.A"], vec![]);
        let req = build_rerank_prompt(&i, &PromptTemplate::rerank_default(), "m").unwrap();
        assert!(req.last_user_message().unwrap().contains(NO_EVIDENCE_MARKER));
        assert_eq!(
            build_rerank_prompt(&input(&[], vec![]), &PromptTemplate::rerank_default(), "m"),
            Err(RerankError::EmptyCandidates)
        );
    }

    #[test]
    fn permutation_examples() {
        assert_eq!(parse_permutation("[2] > [1] > [3]", 3), (vec![2, 1, 3], false));
        assert_eq!(parse_permutation("[2] > [2] > [5]", 3), (vec![2, 1, 3], true));
        assert_eq!(parse_permutation("I think [3] is best.", 3), (vec![3, 1, 2], true));
        assert_eq!(parse_permutation("[0] [99999999999999999999999]", 2), (vec![1, 2], true));
    }

    #[test]
    fn rerank_reorders() {
        let p = FnProvider::new("s", |_: &ChatRequest| Ok("[2] > [1] > [3]".to_string()));
        let r = rerank(&input(&["F32.9", "F32.A", "F33.9"], vec![]), &PromptTemplate::rerank_default(), "m", &p);
        assert_eq!(r.code_list(), ["F32.A", "F32.9", "F33.9"]);
        assert_eq!(r.codes.iter().map(|c| c.rank).collect::<Vec<_>>(), [1, 2, 3]);
        assert_eq!(r.rerank_raw, "[2] > [1] > [3]");
        assert!(!r.repaired && !r.fallback);
    }

    #[test]
    fn single_candidate_skips_provider() {
        let p = FnProvider::new("s", |_: &ChatRequest| Ok(String::new()));
        let r = rerank(&input(&["F32.A"], vec![]), &PromptTemplate::rerank_default(), "m", &p);
        assert_eq!(r.code_list(), ["F32.A"]);
        assert_eq!(p.calls(), 0);
    }

    #[test]
    fn provider_failure_falls_back() {
        let p = FnProvider::new("s", |_: &ChatRequest| Err(LlmError::Timeout));
        let r = rerank(&input(&["F32.9", "F32.A"], vec![]), &PromptTemplate::rerank_default(), "m", &p);
        assert_eq!(r.code_list(), ["F32.9", "F32.A"]);
        assert!(r.fallback);
    }
}
