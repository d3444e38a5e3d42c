//! Dataset loading and micro-averaged metrics for diagnosis extraction,
//! evidence extraction and ICD coding, plus @k curves.

mod dataset;
mod metrics;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{
    load_dataset, load_dataset_with, load_records, AnnotatedRecord, BatchManifest, Dataset, DatasetManifest, DatasetStats,
    GoldAnnotation, SchemaMapping, BATCH1_CODE_ANNOTATIONS, BATCH1_EVIDENCE_TEXTS, BATCH1_RECORDS, MANIFEST_FILE,
};
pub use metrics::{
    normalize_text, score_codes, score_diagnoses, score_evidence, token_jaccard, token_set, Counts, MetricsReport,
    DEFAULT_EVIDENCE_THRESHOLD,
};

use crate::pipeline::{Mode, PredictionResult};

pub const DEFAULT_SWEEP: [usize; 5] = [1, 2, 3, 5, 10];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("schema violation in {file}: {field}")]
    SchemaViolation { file: String, field: String },
    #[error("manifest mismatch for {what}: expected {expected}, found {found}")]
    ManifestMismatch { what: String, expected: usize, found: usize },
    #[error("no predictions available at k={0}")]
    MissingK(usize),
    #[error("predictions mix modes {0} and {1}")]
    MixedModes(Mode, Mode),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

/// Per-record counts for the three sub-tasks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordCounts {
    pub codes: Counts,
    pub diagnoses: Counts,
    pub evidence: Counts,
}

/// Scores one record. `None` predictions count every gold item as missed.
pub fn score_record(pred: Option<&PredictionResult>, gold: &AnnotatedRecord, evidence_threshold: f64) -> RecordCounts {
    let gold_codes: Vec<&str> = gold.gold.iter().map(|g| g.icd_code.as_str()).collect();
    let gold_dx: Vec<&str> = gold.gold.iter().map(|g| g.diagnosis.as_str()).collect();
    let gold_ev: Vec<&str> = unique(gold.gold.iter().flat_map(|g| g.evidence_texts.iter().map(String::as_str)));
    let (codes, dx, ev): (Vec<&str>, Vec<&str>, Vec<&str>) = match pred {
        Some(p) => (
            p.predicted_set.iter().map(String::as_str).collect(),
            p.per_diagnosis.iter().map(|d| d.extraction.query_text()).collect(),
            unique(p.per_diagnosis.iter().flat_map(|d| {
                d.extraction
                    .evidence
                    .iter()
                    .map(|e| e.substituted_sentence.as_deref().unwrap_or(&e.raw))
            })),
        ),
        None => Default::default(),
    };
    RecordCounts {
        codes: score_codes(&codes, &gold_codes),
        diagnoses: score_diagnoses(&dx, &gold_dx),
        evidence: score_evidence(&ev, &gold_ev, evidence_threshold),
    }
}

fn unique<'a>(items: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut seen = BTreeSet::new();
    items.filter(|s| seen.insert(normalize_text(s))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub mode: Mode,
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl CurveRow {
    fn new(mode: Mode, k: usize, c: Counts) -> Self {
        Self {
            mode,
            k,
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
        }
    }
}

/// Total code counts for one set of predictions against the gold dataset.
pub fn code_counts(results: &[PredictionResult], gold: &Dataset) -> Counts {
    let by_id: BTreeMap<&str, &PredictionResult> = results.iter().map(|r| (r.record_id.as_str(), r)).collect();
    gold.records
        .iter()
        .map(|g| score_record(by_id.get(g.record_id.as_str()).copied(), g, DEFAULT_EVIDENCE_THRESHOLD).codes)
        .sum()
}

fn single_mode(results: &[PredictionResult]) -> Result<Option<Mode>, EvalError> {
    let mut mode = None;
    for r in results {
        match mode {
            None => mode = Some(r.mode),
            Some(m) if m != r.mode => return Err(EvalError::MixedModes(m, r.mode)),
            _ => {}
        }
    }
    Ok(mode)
}

/// Code-level micro metrics per requested k. `results_by_k` must hold an
/// entry for every k in `ks`.
pub fn curve_at_k(
    results_by_k: &BTreeMap<usize, Vec<PredictionResult>>,
    gold: &Dataset,
    ks: &[usize],
) -> Result<Vec<CurveRow>, EvalError> {
    ks.iter()
        .map(|&k| {
            let results = results_by_k.get(&k).ok_or(EvalError::MissingK(k))?;
            let mode = single_mode(results)?.unwrap_or(Mode::Full);
            Ok(CurveRow::new(mode, k, code_counts(results, gold)))
        })
        .collect()
}

/// Re-cuts one run at each `k` it can support: any k for PROMPT mode, and
/// k at most the run's own cutoff otherwise.
pub fn sweep_from_run(results: &[PredictionResult], ks: &[usize]) -> Result<BTreeMap<usize, Vec<PredictionResult>>, EvalError> {
    let mode = single_mode(results)?;
    let run_k = results.iter().map(|r| r.k).min().unwrap_or(usize::MAX);
    ks.iter()
        .map(|&k| {
            if mode != Some(Mode::Prompt) && k > run_k {
                return Err(EvalError::MissingK(k));
            }
            Ok((k, results.iter().map(|r| r.at_k(k)).collect()))
        })
        .collect()
}

pub fn curve_to_csv(rows: &[CurveRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("curve row serializes");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopOneRow {
    pub method: String,
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub mode: Option<Mode>,
    pub k: usize,
    pub gold_records: usize,
    pub predicted_records: usize,
    /// Gold records with no prediction; all their gold items count as misses.
    pub missing_predictions: Vec<String>,
    /// Predictions whose record id is absent from the gold set; ignored.
    pub unmatched_predictions: Vec<String>,
    pub codes: MetricsReport,
    pub diagnoses: MetricsReport,
    pub evidence: MetricsReport,
    pub evidence_match_threshold: f64,
    pub union_rule: String,
    pub per_k: Vec<CurveRow>,
    /// Code metrics at the top code per diagnosis.
    pub top1: TopOneRow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateOptions {
    pub evidence_threshold: f64,
    pub sweep: Vec<usize>,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        Self {
            evidence_threshold: DEFAULT_EVIDENCE_THRESHOLD,
            sweep: Vec::new(),
        }
    }
}

pub fn evaluate(results: &[PredictionResult], gold: &Dataset, options: &EvaluateOptions) -> Result<EvaluationReport, EvalError> {
    let mode = single_mode(results)?;
    let by_id: BTreeMap<&str, &PredictionResult> = results.iter().map(|r| (r.record_id.as_str(), r)).collect();
    let gold_ids: BTreeSet<&str> = gold.records.iter().map(|r| r.record_id.as_str()).collect();
    let mut total = RecordCounts::default();
    let mut missing = Vec::new();
    for g in &gold.records {
        let pred = by_id.get(g.record_id.as_str()).copied();
        if pred.is_none() {
            missing.push(g.record_id.clone());
        }
        let c = score_record(pred, g, options.evidence_threshold);
        total.codes += c.codes;
        total.diagnoses += c.diagnoses;
        total.evidence += c.evidence;
    }
    let unmatched = results
        .iter()
        .filter(|r| !gold_ids.contains(r.record_id.as_str()))
        .map(|r| r.record_id.clone())
        .collect();

    let per_k = curve_at_k(&sweep_from_run(results, &options.sweep)?, gold, &options.sweep)?;
    let at1 = code_counts(&results.iter().map(|r| r.at_k(1)).collect::<Vec<_>>(), gold);
    let k = results.iter().map(|r| r.k).min().unwrap_or(0);
    Ok(EvaluationReport {
        mode,
        k,
        gold_records: gold.records.len(),
        predicted_records: results.len(),
        missing_predictions: missing,
        unmatched_predictions: unmatched,
        codes: total.codes.report(),
        diagnoses: total.diagnoses.report(),
        evidence: total.evidence.report(),
        evidence_match_threshold: options.evidence_threshold,
        union_rule: crate::pipeline::UNION_RULE.to_string(),
        per_k,
        top1: TopOneRow {
            method: mode.map(|m| m.to_string()).unwrap_or_else(|| "NONE".into()),
            k: 1,
            precision: at1.precision(),
            recall: at1.recall(),
            f1: at1.f1(),
        },
    })
}
