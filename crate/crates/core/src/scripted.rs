//! Scripted clinical scenarios and a deterministic LLM that answers from them.
//!
//! The scripted LLM stands in for a hosted model when generating mock
//! fixtures: extraction requests are answered with the scenario's scripted
//! items, and re-rank requests put the scenario's preferred codes first.

use std::path::Path;
use std::sync::Arc;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::extractor::{render_extraction_json, ParsedExtraction, EXTRACTION_SYSTEM_PROMPT};
use crate::llm::{ChatRequest, FixtureSet, LlmError, LlmProvider, RecordingProvider, Role};
use crate::ontology::normalize_code;
use crate::pipeline::{MedicalRecord, Mode, Pipeline, PipelineConfig, PipelineError};
use crate::reranker::RERANK_SYSTEM_PROMPT;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("scenario file {path}: {message}")]
    Io { path: String, message: String },
    #[error("scenario file: {0}")]
    Parse(String),
    #[error("duplicate scenario id {0}")]
    DuplicateId(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedExtraction {
    pub diagnosis: String,
    #[serde(default)]
    pub supporting_evidence: Vec<String>,
    #[serde(default)]
    pub icd10: Option<String>,
    /// Codes the scripted re-ranker moves to the front, in this order.
    #[serde(default)]
    pub rerank_preference: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedGold {
    pub diagnosis: String,
    pub icd_code: String,
    #[serde(default)]
    pub evidence_texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub record_id: String,
    /// Free-form grouping label used to split datasets.
    pub group: String,
    pub text: String,
    #[serde(default)]
    pub reasoning: String,
    pub extractions: Vec<ScriptedExtraction>,
    pub gold: Vec<ScriptedGold>,
}

impl Scenario {
    /// The LLM answer: reasoning prose, then a fenced JSON array.
    pub fn extraction_response(&self) -> String {
        let items: Vec<ParsedExtraction> = self
            .extractions
            .iter()
            .map(|e| ParsedExtraction {
                diagnosis: e.diagnosis.clone(),
                supporting_evidence: e.supporting_evidence.clone(),
                icd10: e.icd10.clone(),
            })
            .collect();
        format!("{}\n\n```json\n{}\n```", self.reasoning.trim(), render_extraction_json(&items))
    }

    /// The record in the default dataset schema.
    pub fn dataset_value(&self) -> Value {
        json!({
            "record_id": self.record_id,
            "text": self.text,
            "annotations": self.gold.iter().map(|g| json!({
                "diagnosis": g.diagnosis,
                "icd10": g.icd_code,
                "evidence": g.evidence_texts,
            })).collect::<Vec<_>>(),
        })
    }
}

pub fn parse_scenarios(text: &str) -> Result<Vec<Scenario>, ScenarioError> {
    let list: Vec<Scenario> = serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    let mut seen = std::collections::BTreeSet::new();
    for s in &list {
        if !seen.insert(s.record_id.as_str()) {
            return Err(ScenarioError::DuplicateId(s.record_id.clone()));
        }
    }
    Ok(list)
}

pub fn load_scenarios(path: impl AsRef<Path>) -> Result<Vec<Scenario>, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_scenarios(&text)
}

/// Dataset bundle (one JSON object per line) for the scenarios in `group`,
/// or for all scenarios when `group` is `None`.
pub fn dataset_jsonl(scenarios: &[Scenario], group: Option<&str>) -> String {
    scenarios
        .iter()
        .filter(|s| group.is_none_or(|g| s.group == g))
        .map(|s| {
            let mut line = serde_json::to_string(&s.dataset_value()).expect("scenario serializes");
            line.push('\n');
            line
        })
        .collect()
}

/// Runs every scenario through `pipeline` in FULL mode with the scripted LLM
/// and returns the recorded exchanges. Retrieval settings come from `config`;
/// its mode and k are ignored because neither changes any prompt.
pub fn record_fixtures(
    scenarios: &[Scenario],
    pipeline: &Pipeline,
    config: &PipelineConfig,
) -> Result<FixtureSet, PipelineError> {
    let recorder = Arc::new(RecordingProvider::in_memory(ScriptedLlm::new(scenarios.to_vec())));
    let pipeline = pipeline.clone().with_llm(recorder.clone());
    let config = PipelineConfig {
        mode: Mode::Full,
        ..config.clone()
    };
    let records: Vec<MedicalRecord> = scenarios
        .iter()
        .map(|s| MedicalRecord::new(s.record_id.clone(), s.text.clone()))
        .collect();
    pipeline.run_batch(&records, &config)?;
    Ok(recorder.fixtures())
}

/// Deterministic provider answering from scenarios. Requests it does not
/// recognize fail with `InvalidRequest`.
#[derive(Debug, Clone)]
pub struct ScriptedLlm {
    scenarios: Vec<Scenario>,
    candidate_line: Regex,
}

impl ScriptedLlm {
    pub fn new(scenarios: Vec<Scenario>) -> Self {
        Self {
            scenarios,
            candidate_line: Regex::new(r"(?m)^\[(\d+)\] ([A-Za-z0-9.]+):").expect("static regex"),
        }
    }

    fn answer_extraction(&self, user: &str) -> Result<String, LlmError> {
        // Longest text first so a record that contains another is not shadowed.
        let mut hits: Vec<&Scenario> = self.scenarios.iter().filter(|s| user.contains(s.text.as_str())).collect();
        hits.sort_by_key(|s| std::cmp::Reverse(s.text.len()));
        hits.first()
            .map(|s| s.extraction_response())
            .ok_or_else(|| LlmError::InvalidRequest("no scenario matches the note".into()))
    }

    fn answer_rerank(&self, user: &str) -> Result<String, LlmError> {
        let diagnosis = user
            .lines()
            .find_map(|l| l.strip_prefix("Diagnosis: "))
            .map(str::trim)
            .ok_or_else(|| LlmError::InvalidRequest("rerank prompt without a diagnosis line".into()))?;
        let preference: &[String] = self
            .scenarios
            .iter()
            .flat_map(|s| &s.extractions)
            .find(|e| e.diagnosis.trim().eq_ignore_ascii_case(diagnosis))
            .map_or(&[], |e| &e.rerank_preference);
        let candidates: Vec<(usize, String)> = self
            .candidate_line
            .captures_iter(user)
            .filter_map(|c| Some((c[1].parse().ok()?, normalize_code(&c[2]))))
            .collect();
        if candidates.is_empty() {
            return Err(LlmError::InvalidRequest("rerank prompt without candidates".into()));
        }
        let mut order: Vec<usize> = Vec::with_capacity(candidates.len());
        for code in preference {
            let code = normalize_code(code);
            if let Some((id, _)) = candidates.iter().find(|(_, c)| *c == code) {
                if !order.contains(id) {
                    order.push(*id);
                }
            }
        }
        for (id, _) in &candidates {
            if !order.contains(id) {
                order.push(*id);
            }
        }
        Ok(order.iter().map(|i| format!("[{i}]")).collect::<Vec<_>>().join(" > "))
    }
}

impl LlmProvider for ScriptedLlm {
    fn id(&self) -> String {
        "scripted".to_string()
    }

    fn complete(&self, request: &ChatRequest) -> Result<crate::llm::ChatResponse, LlmError> {
        let system = request
            .messages
            .iter()
            .find(|m| m.role == Role::System)
            .map(|m| m.content.as_str());
        let user = request.last_user_message().unwrap_or_default();
        let text = match system {
            Some(EXTRACTION_SYSTEM_PROMPT) => self.answer_extraction(user)?,
            Some(RERANK_SYSTEM_PROMPT) => self.answer_rerank(user)?,
            _ => return Err(LlmError::InvalidRequest("unrecognized system prompt".into())),
        };
        Ok(crate::llm::ChatResponse::stop(text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ChatMessage;

    fn scenario() -> Scenario {
        Scenario {
            record_id: "r1".into(),
            group: "g".into(),
            text: "Assessment: depression.".into(),
            reasoning: "Mood disorder.".into(),
            extractions: vec![ScriptedExtraction {
                diagnosis: "depression".into(),
                supporting_evidence: vec![],
                icd10: Some("F32.9".into()),
                rerank_preference: vec!["F32.A".into()],
            }],
            gold: vec![],
        }
    }

    #[test]
    fn rerank_puts_preferred_code_first() {
        let llm = ScriptedLlm::new(vec![scenario()]);
        let user = "Diagnosis: depression\n\n[1] F32.9: x\n[2] F33.9: y\n[3] F32.A: z\n";
        let req = ChatRequest::new("m", vec![ChatMessage::system(RERANK_SYSTEM_PROMPT), ChatMessage::user(user)]);
        assert_eq!(llm.complete(&req).unwrap().text, "[3] > [1] > [2]");
    }

    #[test]
    fn extraction_answer_parses_back() {
        let s = scenario();
        let parsed = crate::extractor::parse_extraction_json(&s.extraction_response()).unwrap();
        assert_eq!(parsed.items[0].icd10.as_deref(), Some("F32.9"));
        assert_eq!(parsed.reasoning.trim(), "Mood disorder.");
    }

    #[test]
    fn unknown_request_is_rejected() {
        let llm = ScriptedLlm::new(vec![scenario()]);
        let req = ChatRequest::new("m", vec![ChatMessage::user("hello")]);
        assert!(matches!(llm.complete(&req), Err(LlmError::InvalidRequest(_))));
    }
}
