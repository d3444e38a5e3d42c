//! Record-level orchestration of extract, retrieve and rerank, including the
//! three ablation modes.
//!
//! The record-level predicted set is the union over diagnoses of each
//! diagnosis' top-k codes.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{EmbeddingProvider, VectorIndex};
use crate::extractor::{extract_record, ExtractError, Extraction, GroundingConfig};
use crate::llm::{hex_sha256, LlmProvider};
use crate::ontology::{validate_code_format, Ontology};
use crate::prompt::PromptTemplate;
use crate::reranker::{rerank, RankedCodes, RerankInput};
use crate::retriever::{merge_candidates, retrieve_for_extraction, CandidateSet, RetrieveError, DEFAULT_K_RETRIEVE};

pub const UNION_RULE: &str = "per-diagnosis top-k union";
pub const DEFAULT_MODEL: &str = "gpt-4";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
    #[error("mode {0} needs a vector index and embedding provider")]
    MissingIndex(Mode),
    #[error("record {record_id} has {len} characters, above the limit of {max}")]
    RecordTooLong { record_id: String, len: usize, max: usize },
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Retrieve(#[from] RetrieveError),
    #[error("all {0} records failed")]
    AllRecordsFailed(usize, Box<RunManifest>),
    #[error("cannot write {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed predictions line {line}: {message}")]
    MalformedPredictions { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    Prompt,
    Retrieve,
    PromptRetrieve,
    Full,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Prompt, Mode::Retrieve, Mode::PromptRetrieve, Mode::Full];

    pub fn uses_retrieval(self) -> bool {
        !matches!(self, Mode::Prompt)
    }

    pub fn as_cli(self) -> &'static str {
        match self {
            Mode::Prompt => "prompt",
            Mode::Retrieve => "retrieve",
            Mode::PromptRetrieve => "prompt-retrieve",
            Mode::Full => "full",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Prompt => "PROMPT",
            Mode::Retrieve => "RETRIEVE",
            Mode::PromptRetrieve => "PROMPT_RETRIEVE",
            Mode::Full => "FULL",
        })
    }
}

impl FromStr for Mode {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "prompt" => Ok(Mode::Prompt),
            "retrieve" => Ok(Mode::Retrieve),
            "prompt-retrieve" | "prompt+retrieve" => Ok(Mode::PromptRetrieve),
            "full" => Ok(Mode::Full),
            other => Err(PipelineError::InvalidConfig(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub k: usize,
    pub k_retrieve: usize,
    pub extraction_model: String,
    pub rerank_model: String,
    pub grounding: GroundingConfig,
    /// Keep raw LLM text and reasoning in results.
    pub audit: bool,
    /// Records longer than this fail instead of being sent to the provider.
    pub max_record_chars: Option<usize>,
    /// Records processed concurrently by `run_batch`.
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Full,
            k: 1,
            k_retrieve: DEFAULT_K_RETRIEVE,
            extraction_model: DEFAULT_MODEL.to_string(),
            rerank_model: DEFAULT_MODEL.to_string(),
            grounding: GroundingConfig::default(),
            audit: false,
            max_record_chars: None,
            workers: 4,
        }
    }
}

impl PipelineConfig {
    pub fn new(mode: Mode, k: usize) -> Self {
        Self {
            mode,
            k,
            ..Self::default()
        }
    }

    pub fn with_k_retrieve(mut self, k_retrieve: usize) -> Self {
        self.k_retrieve = k_retrieve;
        self
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.k == 0 {
            return Err(PipelineError::InvalidConfig("k must be positive".into()));
        }
        if self.mode.uses_retrieval() && self.k_retrieve == 0 {
            return Err(PipelineError::InvalidConfig("k_retrieve must be positive".into()));
        }
        if self.workers == 0 {
            return Err(PipelineError::InvalidConfig("workers must be positive".into()));
        }
        Ok(())
    }

    /// `k` clamped to `k_retrieve + 1` for modes that retrieve.
    pub fn effective_k(&self) -> usize {
        if self.mode.uses_retrieval() {
            self.k.min(self.k_retrieve + 1)
        } else {
            self.k
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MedicalRecord {
    pub record_id: String,
    pub text: String,
}

impl MedicalRecord {
    pub fn new(record_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            record_id: record_id.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisPrediction {
    pub extraction: Extraction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<CandidateSet>,
    /// Every ranked candidate, before the cutoff.
    pub full_ranking: RankedCodes,
    /// `full_ranking` cut to the effective k.
    pub ranked: RankedCodes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub record_id: String,
    pub mode: Mode,
    pub k: usize,
    pub per_diagnosis: Vec<DiagnosisPrediction>,
    /// Sorted and deduplicated.
    pub predicted_set: Vec<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub raw_llm_text: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub reasoning_text: String,
}

impl PredictionResult {
    fn assemble(record_id: String, mode: Mode, k: usize, per_diagnosis: Vec<DiagnosisPrediction>) -> Self {
        let mut out = Self {
            record_id,
            mode,
            k,
            per_diagnosis,
            predicted_set: Vec::new(),
            raw_llm_text: String::new(),
            reasoning_text: String::new(),
        };
        out.recompute_set();
        out
    }

    fn recompute_set(&mut self) {
        let mut set: Vec<String> = self
            .per_diagnosis
            .iter()
            .flat_map(|d| d.ranked.codes.iter().map(|c| c.code.clone()))
            .collect();
        set.sort();
        set.dedup();
        self.predicted_set = set;
    }

    /// Re-cuts every diagnosis' full ranking at `k`. Only meaningful for
    /// cutoffs the original run could have produced.
    pub fn at_k(&self, k: usize) -> Self {
        let cut = if self.mode == Mode::Prompt { 1 } else { k };
        let mut out = self.clone();
        out.k = k;
        for d in &mut out.per_diagnosis {
            d.ranked = d.full_ranking.truncated(cut);
        }
        out.recompute_set();
        out
    }

    /// Drops raw LLM text, reasoning and rerank transcripts.
    pub fn without_audit(mut self) -> Self {
        self.raw_llm_text.clear();
        self.reasoning_text.clear();
        for d in &mut self.per_diagnosis {
            d.full_ranking.rerank_raw.clear();
            d.ranked.rerank_raw.clear();
        }
        self
    }
}

/// Shared, read-only pipeline components.
#[derive(Clone)]
pub struct Pipeline {
    ontology: Arc<Ontology>,
    llm: Arc<dyn LlmProvider>,
    index: Option<Arc<VectorIndex>>,
    embedder: Option<Arc<dyn EmbeddingProvider>>,
    extraction_template: PromptTemplate,
    rerank_template: PromptTemplate,
}

impl fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Pipeline")
            .field("codes", &self.ontology.len())
            .field("llm", &self.llm.id())
            .field("index", &self.index.as_ref().map(|i| i.len()))
            .field("embedder", &self.embedder.as_ref().map(|e| e.id()))
            .finish()
    }
}

impl Pipeline {
    pub fn new(ontology: Arc<Ontology>, llm: Arc<dyn LlmProvider>) -> Self {
        Self {
            ontology,
            llm,
            index: None,
            embedder: None,
            extraction_template: PromptTemplate::extraction_default(),
            rerank_template: PromptTemplate::rerank_default(),
        }
    }

    pub fn with_retrieval(mut self, index: Arc<VectorIndex>, embedder: Arc<dyn EmbeddingProvider>) -> Self {
        self.index = Some(index);
        self.embedder = Some(embedder);
        self
    }

    pub fn with_llm(mut self, llm: Arc<dyn LlmProvider>) -> Self {
        self.llm = llm;
        self
    }

    pub fn with_templates(mut self, extraction: PromptTemplate, rerank: PromptTemplate) -> Self {
        self.extraction_template = extraction;
        self.rerank_template = rerank;
        self
    }

    pub fn ontology(&self) -> &Ontology {
        &self.ontology
    }

    pub fn llm_id(&self) -> String {
        self.llm.id()
    }

    pub fn embedder_id(&self) -> Option<String> {
        self.embedder.as_ref().map(|e| e.id())
    }

    pub fn extraction_template(&self) -> &PromptTemplate {
        &self.extraction_template
    }

    pub fn rerank_template(&self) -> &PromptTemplate {
        &self.rerank_template
    }

    /// Hash over the config, template texts and provider ids. Two runs with
    /// the same hash and fixtures produce the same output.
    pub fn config_hash(&self, config: &PipelineConfig) -> String {
        let key = serde_json::json!({
            "config": config,
            "extraction_template": self.extraction_template.hash(),
            "rerank_template": self.rerank_template.hash(),
            "llm": self.llm.id(),
            "embedder": self.embedder_id(),
        });
        hex_sha256(key.to_string().as_bytes())
    }

    pub fn run_record(&self, record: &MedicalRecord, config: &PipelineConfig) -> Result<PredictionResult, PipelineError> {
        config.validate()?;
        let retrieval = match (config.mode.uses_retrieval(), &self.index, &self.embedder) {
            (false, _, _) => None,
            (true, Some(i), Some(e)) => Some((i.as_ref(), e.as_ref())),
            (true, _, _) => return Err(PipelineError::MissingIndex(config.mode)),
        };
        if let Some(max) = config.max_record_chars {
            let len = record.text.chars().count();
            if len > max {
                return Err(PipelineError::RecordTooLong {
                    record_id: record.record_id.clone(),
                    len,
                    max,
                });
            }
        }
        let extracted = extract_record(
            &record.record_id,
            &record.text,
            &self.extraction_template,
            &config.extraction_model,
            self.llm.as_ref(),
            &self.ontology,
            &config.grounding,
        )?;
        let k = config.effective_k();
        let per_diagnosis = extracted
            .extractions
            .par_iter()
            .enumerate()
            .map(|(i, e)| self.predict_diagnosis(i, e, retrieval, config, k))
            .collect::<Result<Vec<_>, _>>()?;
        let mut result = PredictionResult::assemble(record.record_id.clone(), config.mode, config.k, per_diagnosis);
        if config.audit {
            result.raw_llm_text = extracted.raw_llm_text;
            result.reasoning_text = extracted.reasoning_text;
        } else {
            result = result.without_audit();
        }
        debug_assert!(result
            .predicted_set
            .iter()
            .all(|c| validate_code_format(c) && self.ontology.is_billable(c)));
        Ok(result)
    }

    fn predict_diagnosis(
        &self,
        index: usize,
        extraction: &Extraction,
        retrieval: Option<(&VectorIndex, &dyn EmbeddingProvider)>,
        config: &PipelineConfig,
        k: usize,
    ) -> Result<DiagnosisPrediction, PipelineError> {
        let retrieved = match retrieval {
            Some((vi, emb)) => retrieve_for_extraction(extraction, index, vi, emb, config.k_retrieve)?,
            None => Vec::new(),
        };
        let (candidates, full_ranking) = match config.mode {
            Mode::Prompt => {
                let set = merge_candidates(extraction, index, &[], &self.ontology);
                let ranking = RankedCodes::in_order(index, &set.candidates);
                (set, ranking)
            }
            Mode::Retrieve => {
                let no_prompt = Extraction {
                    prompted_code: None,
                    prompted_code_valid: false,
                    ..extraction.clone()
                };
                let set = merge_candidates(&no_prompt, index, &retrieved, &self.ontology);
                let ranking = RankedCodes::in_order(index, &set.candidates);
                (set, ranking)
            }
            Mode::PromptRetrieve => {
                let set = merge_candidates(extraction, index, &retrieved, &self.ontology);
                let ranking = RankedCodes::in_order(index, &set.candidates);
                (set, ranking)
            }
            Mode::Full => {
                let set = merge_candidates(extraction, index, &retrieved, &self.ontology);
                let input = RerankInput::new(
                    extraction.query_text(),
                    extraction.evidence_sentences(),
                    &set,
                    &self.ontology,
                );
                let ranking = rerank(&input, &self.rerank_template, &config.rerank_model, self.llm.as_ref());
                (set, ranking)
            }
        };
        let ranked = full_ranking.truncated(k);
        Ok(DiagnosisPrediction {
            extraction: extraction.clone(),
            candidates: config.mode.uses_retrieval().then_some(candidates),
            full_ranking,
            ranked,
        })
    }

    /// Runs every record; failures are recorded in the manifest and the
    /// batch continues. Fails only when every record of a non-empty batch fails.
    pub fn run_batch(&self, records: &[MedicalRecord], config: &PipelineConfig) -> Result<BatchOutput, PipelineError> {
        config.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
        let outcomes: Vec<Result<PredictionResult, PipelineError>> =
            pool.install(|| records.par_iter().map(|r| self.run_record(r, config)).collect());

        let mut results = Vec::new();
        let mut statuses = Vec::new();
        for (record, outcome) in records.iter().zip(outcomes) {
            match outcome {
                Ok(r) => {
                    results.push(r);
                    statuses.push(RecordStatus::ok(&record.record_id));
                }
                Err(e) => {
                    tracing::warn!(record = %record.record_id, error = %e, "record failed");
                    statuses.push(RecordStatus::failed(&record.record_id, e.to_string()));
                }
            }
        }
        let manifest = RunManifest {
            config_hash: self.config_hash(config),
            config: config.clone(),
            effective_k: config.effective_k(),
            extraction_template: TemplateRef::of(&self.extraction_template),
            rerank_template: TemplateRef::of(&self.rerank_template),
            llm_provider: self.llm.id(),
            embedder: self.embedder_id(),
            union_rule: UNION_RULE.to_string(),
            succeeded: results.len(),
            failed: statuses.len() - results.len(),
            records: statuses,
        };
        if !records.is_empty() && results.is_empty() {
            return Err(PipelineError::AllRecordsFailed(records.len(), Box::new(manifest)));
        }
        Ok(BatchOutput { results, manifest })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateRef {
    pub name: String,
    pub sha256: String,
}

impl TemplateRef {
    fn of(t: &PromptTemplate) -> Self {
        Self {
            name: t.name().to_string(),
            sha256: t.hash(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordStatus {
    pub record_id: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RecordStatus {
    fn ok(id: &str) -> Self {
        Self {
            record_id: id.to_string(),
            ok: true,
            error: None,
        }
    }

    fn failed(id: &str, error: String) -> Self {
        Self {
            record_id: id.to_string(),
            ok: false,
            error: Some(error),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub config: PipelineConfig,
    pub effective_k: usize,
    pub extraction_template: TemplateRef,
    pub rerank_template: TemplateRef,
    pub llm_provider: String,
    pub embedder: Option<String>,
    pub union_rule: String,
    pub succeeded: usize,
    pub failed: usize,
    /// Input order.
    pub records: Vec<RecordStatus>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchOutput {
    pub results: Vec<PredictionResult>,
    pub manifest: RunManifest,
}

impl BatchOutput {
    pub fn to_jsonl(&self) -> String {
        predictions_to_jsonl(&self.results)
    }

    /// Writes predictions to `path` and the manifest to `<path>.manifest.json`.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), PipelineError> {
        let path = path.as_ref();
        write_file(path, self.to_jsonl().as_bytes())?;
        let manifest = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        write_file(&manifest_path(path), manifest.as_bytes())
    }
}

pub fn manifest_path(predictions: &Path) -> std::path::PathBuf {
    let mut name = predictions.as_os_str().to_owned();
    name.push(".manifest.json");
    name.into()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let io = |e: std::io::Error| PipelineError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(bytes).map_err(io)
}

pub fn predictions_to_jsonl(results: &[PredictionResult]) -> String {
    let mut out = String::new();
    for r in results {
        out.push_str(&serde_json::to_string(r).expect("prediction serializes"));
        out.push('\n');
    }
    out
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionResult>, PipelineError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_predictions(&text)
}

pub fn parse_predictions(text: &str) -> Result<Vec<PredictionResult>, PipelineError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| PipelineError::MalformedPredictions {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{build_index, HashingEmbedder};
    use crate::llm::{ChatRequest, FnProvider, LlmError};

    const RECORD: &str = "Regarding her depression, the patient feels that it is well managed on Effexor.";

    fn ontology() -> Arc<Ontology> {
        Arc::new(
            Ontology::parse_code_table([
                "F32.9\t1\tMdd\tMajor depressive disorder, single episode, unspecified",
                "F32.A\t1\tDepression\tDepression, unspecified",
                "F33.9\t1\tMdd recurrent\tMajor depressive disorder, recurrent, unspecified",
                "F41.9\t1\tAnxiety\tAnxiety disorder, unspecified",
            ])
            .unwrap(),
        )
    }

    fn pipeline(code: &'static str, fail_rerank: bool) -> Pipeline {
        let llm = FnProvider::new("scripted", move |req: &ChatRequest| {
            let user = req.last_user_message().unwrap();
            if user.contains("Rank all") {
                if fail_rerank {
                    return Err(LlmError::Timeout);
                }
                let n = user.matches("\n[").count();
                return Ok((1..=n).rev().map(|i| format!("[{i}]")).collect::<Vec<_>>().join(" > "));
            }
            if user.contains("EMPTY") {
                return Err(LlmError::FixtureMiss("x".into()));
            }
            Ok(format!(
                r#"[{{"diagnosis":"depression","supporting_evidence":["well managed on Effexor"],"icd10":"{code}"}}]"#
            ))
        });
        let ont = ontology();
        let emb: Arc<dyn EmbeddingProvider> = Arc::new(HashingEmbedder::default());
        let index = Arc::new(build_index(&ont, emb.as_ref()).unwrap());
        Pipeline::new(ont, Arc::new(llm)).with_retrieval(index, emb)
    }

    fn record() -> MedicalRecord {
        MedicalRecord::new("r1", RECORD)
    }

    #[test]
    fn prompt_mode_ignores_k() {
        let p = pipeline("F32.9", false);
        let sets: Vec<_> = [1, 2, 5, 10]
            .iter()
            .map(|&k| p.run_record(&record(), &PipelineConfig::new(Mode::Prompt, k)).unwrap().predicted_set)
            .collect();
        assert!(sets.iter().all(|s| s == &["F32.9".to_string()]));
    }

    #[test]
    fn prompt_mode_invalid_code_gives_empty_set() {
        let p = pipeline("ZZZ.99", false);
        let r = p.run_record(&record(), &PipelineConfig::new(Mode::Prompt, 3)).unwrap();
        assert!(r.predicted_set.is_empty());
        assert_eq!(r.per_diagnosis.len(), 1);
    }

    #[test]
    fn full_mode_reverses_with_scripted_reranker() {
        let p = pipeline("F32.9", false);
        let cfg = PipelineConfig::new(Mode::Full, 10).with_k_retrieve(3);
        let r = p.run_record(&record(), &cfg).unwrap();
        let d = &r.per_diagnosis[0];
        let cands = d.candidates.as_ref().unwrap().codes();
        assert_eq!(cands[0], "F32.9");
        assert_eq!(d.full_ranking.codes.last().unwrap().code, "F32.9");
        assert_eq!(d.ranked.codes.len(), cands.len());
        assert_eq!(cfg.effective_k(), 4);
    }

    #[test]
    fn rerank_failure_keeps_merge_order() {
        let p = pipeline("F32.9", true);
        let r = p.run_record(&record(), &PipelineConfig::new(Mode::Full, 1)).unwrap();
        assert_eq!(r.predicted_set, ["F32.9"]);
        assert!(r.per_diagnosis[0].full_ranking.fallback);
    }

    #[test]
    fn at_k_matches_direct_run() {
        let p = pipeline("F32.9", false);
        for mode in [Mode::Retrieve, Mode::PromptRetrieve, Mode::Full] {
            let wide = p.run_record(&record(), &PipelineConfig::new(mode, 5)).unwrap();
            for k in 1..=5 {
                let direct = p.run_record(&record(), &PipelineConfig::new(mode, k)).unwrap();
                assert_eq!(wide.at_k(k).predicted_set, direct.predicted_set, "{mode} k={k}");
            }
        }
    }

    #[test]
    fn prompt_mode_needs_no_index() {
        let llm = FnProvider::new("s", |_: &ChatRequest| {
            Ok(r#"[{"diagnosis":"depression","supporting_evidence":[],"icd10":"F32.A"}]"#.to_string())
        });
        let p = Pipeline::new(ontology(), Arc::new(llm));
        assert_eq!(
            p.run_record(&record(), &PipelineConfig::new(Mode::Prompt, 1)).unwrap().predicted_set,
            ["F32.A"]
        );
        assert!(matches!(
            p.run_record(&record(), &PipelineConfig::new(Mode::Full, 1)),
            Err(PipelineError::MissingIndex(Mode::Full))
        ));
    }

    #[test]
    fn batch_isolates_failures_and_is_deterministic() {
        let p = pipeline("F32.9", false);
        let records = vec![record(), MedicalRecord::new("bad", "EMPTY note"), MedicalRecord::new("r3", RECORD)];
        let cfg = PipelineConfig::new(Mode::Full, 2);
        let a = p.run_batch(&records, &cfg).unwrap();
        let b = p.run_batch(&records, &cfg).unwrap();
        assert_eq!(a.results.len(), 2);
        assert_eq!(a.manifest.failed, 1);
        assert!(!a.manifest.records[1].ok);
        assert_eq!(a.results[1].record_id, "r3");
        assert_eq!(a.to_jsonl(), b.to_jsonl());
        assert_eq!(parse_predictions(&a.to_jsonl()).unwrap(), a.results);

        let empty = p.run_batch(&[], &cfg).unwrap();
        assert!(empty.results.is_empty());
        assert_eq!(empty.manifest.union_rule, UNION_RULE);

        assert!(matches!(
            p.run_batch(&records[1..2], &cfg),
            Err(PipelineError::AllRecordsFailed(1, _))
        ));
    }

    #[test]
    fn long_records_fail_clearly() {
        let p = pipeline("F32.9", false);
        let cfg = PipelineConfig {
            max_record_chars: Some(10),
            ..PipelineConfig::new(Mode::Prompt, 1)
        };
        assert!(matches!(
            p.run_record(&record(), &cfg),
            Err(PipelineError::RecordTooLong { max: 10, .. })
        ));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("prompt-retrieve".parse::<Mode>().unwrap(), Mode::PromptRetrieve);
        assert_eq!("PROMPT_RETRIEVE".parse::<Mode>().unwrap(), Mode::PromptRetrieve);
        assert_eq!(Mode::Full.to_string(), "FULL");
        assert!("bogus".parse::<Mode>().is_err());
    }
}
