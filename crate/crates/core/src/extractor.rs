//! Diagnosis, evidence and initial-code extraction from a clinical note.
//!
//! One LLM call per record returns reasoning prose followed by a JSON array.
//! Each diagnosis is fuzzy-grounded into the note and each evidence snippet is
//! replaced by its best BM25 sentence, so everything shown to a coder is
//! verbatim record text.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::grounding::{
    fuzzy_ground_with, normalized_similarity, Bm25Params, GroundedSpan, SentenceIndex, DEFAULT_FUZZY_THRESHOLD,
};
use crate::llm::{complete, ChatMessage, ChatRequest, LlmError, LlmProvider};
use crate::ontology::{normalize_code, Ontology};
use crate::prompt::{PromptError, PromptTemplate};

pub const EXTRACTION_SYSTEM_PROMPT: &str =
    "You are an experienced medical coder. You read clinical notes and assign ICD-10-CM diagnosis codes.";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExtractError {
    #[error("record text is empty")]
    EmptyRecord,
    #[error(transparent)]
    Template(#[from] PromptError),
    #[error("no JSON array found in LLM output")]
    NoJsonFound,
    #[error("schema violation in element {index}: {field}")]
    SchemaViolation { index: usize, field: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// One element of the LLM's JSON array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedExtraction {
    pub diagnosis: String,
    pub supporting_evidence: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub icd10: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedOutput {
    pub items: Vec<ParsedExtraction>,
    pub reasoning: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub raw: String,
    /// Verbatim record sentence, `None` when BM25 found no overlapping sentence.
    pub substituted_sentence: Option<String>,
    pub span: GroundedSpan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub diagnosis: String,
    pub diagnosis_span: GroundedSpan,
    pub evidence: Vec<EvidenceItem>,
    pub prompted_code: Option<String>,
    pub prompted_code_valid: bool,
    /// Set when this grounded diagnosis span overlaps another one.
    #[serde(default)]
    pub overlaps_other: bool,
}

impl Extraction {
    /// Grounded record text when available, otherwise the LLM surface form.
    pub fn query_text(&self) -> &str {
        if self.diagnosis_span.grounded {
            &self.diagnosis_span.text
        } else {
            &self.diagnosis
        }
    }

    pub fn evidence_sentences(&self) -> Vec<String> {
        self.evidence
            .iter()
            .map(|e| e.substituted_sentence.clone().unwrap_or_else(|| e.raw.clone()))
            .collect()
    }

    /// The prompted code when it passed format and billable checks.
    pub fn valid_prompted_code(&self) -> Option<&str> {
        self.prompted_code.as_deref().filter(|_| self.prompted_code_valid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub record_id: String,
    pub extractions: Vec<Extraction>,
    pub raw_llm_text: String,
    pub reasoning_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundingConfig {
    pub fuzzy_threshold: f64,
    /// BM25 sentences substituted per evidence snippet.
    pub evidence_sentences: usize,
    pub bm25: Bm25Params,
}

impl Default for GroundingConfig {
    fn default() -> Self {
        Self {
            fuzzy_threshold: DEFAULT_FUZZY_THRESHOLD,
            evidence_sentences: 1,
            bm25: Bm25Params::default(),
        }
    }
}

pub fn build_extraction_prompt(
    record_text: &str,
    template: &PromptTemplate,
    model: &str,
) -> Result<ChatRequest, ExtractError> {
    if record_text.trim().is_empty() {
        return Err(ExtractError::EmptyRecord);
    }
    template.require(&["record"])?;
    let user = template.render(&[("record", record_text)]);
    Ok(ChatRequest::new(
        model,
        vec![ChatMessage::system(EXTRACTION_SYSTEM_PROMPT), ChatMessage::user(user)],
    ))
}

/// Finds the first JSON array of objects in the text. Prose before it (minus
/// any opening code fence) becomes the reasoning.
pub fn parse_extraction_json(llm_text: &str) -> Result<ParsedOutput, ExtractError> {
    let (start, array) = llm_text
        .match_indices('[')
        .find_map(|(i, _)| {
            let mut stream = serde_json::Deserializer::from_str(&llm_text[i..]).into_iter::<Value>();
            match stream.next() {
                Some(Ok(Value::Array(a))) if a.first().is_none_or(Value::is_object) => Some((i, a)),
                _ => None,
            }
        })
        .ok_or(ExtractError::NoJsonFound)?;

    let items = array
        .iter()
        .enumerate()
        .map(|(index, v)| parse_item(index, v))
        .collect::<Result<Vec<_>, _>>()?;

    let mut reasoning = llm_text[..start].trim_end();
    if let Some(fence) = reasoning.rfind("```") {
        if reasoning[fence + 3..].chars().all(|c| c.is_ascii_alphanumeric()) {
            reasoning = reasoning[..fence].trim_end();
        }
    }
    Ok(ParsedOutput {
        items,
        reasoning: reasoning.trim().to_string(),
    })
}

fn parse_item(index: usize, v: &Value) -> Result<ParsedExtraction, ExtractError> {
    let violation = |field: &str| ExtractError::SchemaViolation {
        index,
        field: field.to_string(),
    };
    let obj = v.as_object().ok_or_else(|| violation("<object>"))?;
    let diagnosis = obj
        .get("diagnosis")
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| violation("diagnosis"))?
        .to_string();
    let supporting_evidence = obj
        .get("supporting_evidence")
        .and_then(Value::as_array)
        .ok_or_else(|| violation("supporting_evidence"))?
        .iter()
        .map(|e| e.as_str().map(str::to_string).ok_or_else(|| violation("supporting_evidence")))
        .collect::<Result<Vec<_>, _>>()?;
    let icd10 = match obj.get("icd10") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) if s.trim().is_empty() => None,
        Some(Value::String(s)) => Some(s.trim().to_string()),
        Some(_) => return Err(violation("icd10")),
    };
    Ok(ParsedExtraction {
        diagnosis,
        supporting_evidence,
        icd10,
    })
}

/// Renders items in the schema the parser accepts.
pub fn render_extraction_json(items: &[ParsedExtraction]) -> String {
    serde_json::to_string_pretty(items).expect("extractions serialize")
}

/// Grounds parsed LLM output into the record and checks prompted codes.
/// Never fails: grounding problems are reported through flags.
pub fn ground_extractions(
    record_id: &str,
    parsed: &ParsedOutput,
    raw_llm_text: &str,
    record_text: &str,
    ontology: &Ontology,
    config: &GroundingConfig,
) -> ExtractionResult {
    let sentences = SentenceIndex::build(record_text, config.bm25);
    let mut extractions: Vec<Extraction> = Vec::new();
    for item in &parsed.items {
        let diagnosis_span = fuzzy_ground_with(&item.diagnosis, record_text, config.fuzzy_threshold)
            .unwrap_or_else(|_| GroundedSpan::ungrounded());
        let evidence = item
            .supporting_evidence
            .iter()
            .filter(|raw| !raw.trim().is_empty())
            .flat_map(|raw| ground_evidence(raw, &sentences, config.evidence_sentences))
            .collect();
        let prompted_code = item.icd10.as_deref().map(normalize_code);
        let prompted_code_valid = prompted_code.as_deref().is_some_and(|c| ontology.is_valid_billable(c));
        let extraction = Extraction {
            diagnosis: item.diagnosis.clone(),
            diagnosis_span,
            evidence,
            prompted_code,
            prompted_code_valid,
            overlaps_other: false,
        };
        merge_or_push(&mut extractions, extraction);
    }
    flag_overlaps(&mut extractions);
    ExtractionResult {
        record_id: record_id.to_string(),
        extractions,
        raw_llm_text: raw_llm_text.to_string(),
        reasoning_text: parsed.reasoning.clone(),
    }
}

fn ground_evidence(raw: &str, sentences: &SentenceIndex, n: usize) -> Vec<EvidenceItem> {
    let hits = sentences.top_sentences(raw, n.max(1));
    if hits.is_empty() {
        return vec![EvidenceItem {
            raw: raw.to_string(),
            substituted_sentence: None,
            span: GroundedSpan::ungrounded(),
        }];
    }
    hits.into_iter()
        .map(|hit| EvidenceItem {
            raw: raw.to_string(),
            substituted_sentence: Some(hit.sentence.text.clone()),
            span: GroundedSpan {
                text: hit.sentence.text.clone(),
                start: hit.sentence.start,
                end: hit.sentence.end,
                score: normalized_similarity(raw, &hit.sentence.text),
                grounded: true,
            },
        })
        .collect()
}

fn merge_or_push(list: &mut Vec<Extraction>, new: Extraction) {
    let same_span = |e: &Extraction| {
        e.diagnosis_span.grounded
            && new.diagnosis_span.grounded
            && e.diagnosis_span.start == new.diagnosis_span.start
            && e.diagnosis_span.end == new.diagnosis_span.end
    };
    let Some(existing) = list.iter_mut().find(|e| same_span(e)) else {
        list.push(new);
        return;
    };
    for item in new.evidence {
        let key = item.substituted_sentence.as_ref().unwrap_or(&item.raw);
        let dup = existing
            .evidence
            .iter()
            .any(|e| e.substituted_sentence.as_ref().unwrap_or(&e.raw) == key);
        if !dup {
            existing.evidence.push(item);
        }
    }
    if !existing.prompted_code_valid && new.prompted_code_valid {
        existing.prompted_code = new.prompted_code;
        existing.prompted_code_valid = true;
    } else if existing.prompted_code.is_none() {
        existing.prompted_code = new.prompted_code;
    }
}

fn flag_overlaps(list: &mut [Extraction]) {
    let spans: Vec<Option<(usize, usize)>> = list
        .iter()
        .map(|e| e.diagnosis_span.grounded.then_some((e.diagnosis_span.start, e.diagnosis_span.end)))
        .collect();
    for (i, e) in list.iter_mut().enumerate() {
        let Some((s, t)) = spans[i] else { continue };
        e.overlaps_other = spans
            .iter()
            .enumerate()
            .any(|(j, other)| j != i && other.is_some_and(|(s2, t2)| s < t2 && s2 < t));
    }
}

/// Prompt, parse and ground one record.
pub fn extract_record(
    record_id: &str,
    record_text: &str,
    template: &PromptTemplate,
    model: &str,
    provider: &dyn LlmProvider,
    ontology: &Ontology,
    config: &GroundingConfig,
) -> Result<ExtractionResult, ExtractError> {
    let request = build_extraction_prompt(record_text, template, model)?;
    let response = complete(&request, provider)?;
    let parsed = parse_extraction_json(&response.text)?;
    Ok(ground_extractions(record_id, &parsed, &response.text, record_text, ontology, config))
}
