use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::EvalError;
use crate::ontology::is_canonical_code;
use crate::pipeline::MedicalRecord;

/// Published size of the first annotated batch.
pub const BATCH1_RECORDS: usize = 184;
pub const BATCH1_CODE_ANNOTATIONS: usize = 360;
pub const BATCH1_EVIDENCE_TEXTS: usize = 737;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAnnotation {
    pub diagnosis: String,
    pub icd_code: String,
    pub evidence_texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedRecord {
    pub record_id: String,
    pub text: String,
    pub gold: Vec<GoldAnnotation>,
}

impl AnnotatedRecord {
    pub fn as_medical_record(&self) -> MedicalRecord {
        MedicalRecord::new(&self.record_id, &self.text)
    }
}

/// Field names of the on-disk record schema. The defaults describe
/// `{record_id, text, annotations: [{diagnosis, icd10, evidence: [...]}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaMapping {
    pub record_id: String,
    pub text: String,
    pub annotations: String,
    pub diagnosis: String,
    pub code: String,
    pub evidence: String,
}

impl Default for SchemaMapping {
    fn default() -> Self {
        Self {
            record_id: "record_id".into(),
            text: "text".into(),
            annotations: "annotations".into(),
            diagnosis: "diagnosis".into(),
            code: "icd10".into(),
            evidence: "evidence".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchManifest {
    pub name: String,
    pub record_ids: Vec<String>,
    pub code_annotations: usize,
    pub evidence_texts: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub batches: Vec<BatchManifest>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub records: usize,
    pub code_annotations: usize,
    pub evidence_texts: usize,
}

impl DatasetStats {
    pub fn of<'a>(records: impl IntoIterator<Item = &'a AnnotatedRecord>) -> Self {
        let mut s = Self::default();
        for r in records {
            s.records += 1;
            s.code_annotations += r.gold.len();
            s.evidence_texts += r.gold.iter().map(|g| g.evidence_texts.len()).sum::<usize>();
        }
        s
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    pub records: Vec<AnnotatedRecord>,
    pub manifest: Option<DatasetManifest>,
}

impl Dataset {
    pub fn get(&self, record_id: &str) -> Option<&AnnotatedRecord> {
        self.records.iter().find(|r| r.record_id == record_id)
    }

    pub fn stats(&self) -> DatasetStats {
        DatasetStats::of(&self.records)
    }

    /// Records listed under the named manifest batch, in manifest order.
    pub fn batch(&self, name: &str) -> Option<Vec<&AnnotatedRecord>> {
        let batch = self.manifest.as_ref()?.batches.iter().find(|b| b.name == name)?;
        Some(batch.record_ids.iter().filter_map(|id| self.get(id)).collect())
    }

    /// Checks the evaluation batch against its published counts. Uses the
    /// manifest's `batch-1` entry when present, otherwise every record.
    pub fn expect_batch1(&self) -> Result<DatasetStats, EvalError> {
        let stats = match self.batch("batch-1") {
            Some(records) => DatasetStats::of(records),
            None => self.stats(),
        };
        let checks = [
            ("batch-1 records", BATCH1_RECORDS, stats.records),
            ("batch-1 code annotations", BATCH1_CODE_ANNOTATIONS, stats.code_annotations),
            ("batch-1 evidence texts", BATCH1_EVIDENCE_TEXTS, stats.evidence_texts),
        ];
        for (what, expected, found) in checks {
            if expected != found {
                return Err(EvalError::ManifestMismatch {
                    what: what.into(),
                    expected,
                    found,
                });
            }
        }
        Ok(stats)
    }

    pub fn medical_records(&self) -> Vec<MedicalRecord> {
        self.records.iter().map(AnnotatedRecord::as_medical_record).collect()
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, EvalError> {
    load_dataset_with(path, &SchemaMapping::default())
}

/// Loads a directory of per-record `.json` / `.jsonl` files (plus an optional
/// `manifest.json`), or a single `.jsonl` bundle or `.json` array file.
pub fn load_dataset_with(path: impl AsRef<Path>, mapping: &SchemaMapping) -> Result<Dataset, EvalError> {
    let path = path.as_ref();
    let (records, manifest) = walk(path, |v| parse_record(v, mapping))?;
    let mut seen = HashSet::new();
    for r in &records {
        if !seen.insert(r.record_id.clone()) {
            return Err(EvalError::SchemaViolation {
                file: path.display().to_string(),
                field: format!("duplicate record_id {}", r.record_id),
            });
        }
    }
    let dataset = Dataset { records, manifest };
    if let Some(m) = &dataset.manifest {
        check_manifest(&dataset, m)?;
    }
    Ok(dataset)
}

/// Reads only `record_id` and `text` from the same layouts
/// [`load_dataset_with`] accepts; annotations are optional and ignored.
pub fn load_records(path: impl AsRef<Path>, mapping: &SchemaMapping) -> Result<Vec<MedicalRecord>, EvalError> {
    let (records, _) = walk(path.as_ref(), |v| {
        Ok(MedicalRecord::new(record_id(v, mapping)?, record_text(v, mapping)?))
    })?;
    Ok(records)
}

type Walked<T> = (Vec<T>, Option<DatasetManifest>);

fn walk<T>(path: &Path, parse: impl Fn(&Value) -> Result<T, String> + Copy) -> Result<Walked<T>, EvalError> {
    let mut records = Vec::new();
    let mut manifest = None;
    if path.is_dir() {
        let mut files: Vec<_> = std::fs::read_dir(path)
            .map_err(|e| io_err(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        for file in files {
            let name = file.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            if name.starts_with('.') {
                continue;
            }
            if name == MANIFEST_FILE {
                manifest = Some(load_manifest(&file)?);
            } else if name.ends_with(".json") || name.ends_with(".jsonl") {
                records.extend(load_file(&file, parse)?);
            }
        }
    } else {
        records = load_file(path, parse)?;
    }
    Ok((records, manifest))
}

fn check_manifest(dataset: &Dataset, manifest: &DatasetManifest) -> Result<(), EvalError> {
    let by_id: BTreeMap<&str, &AnnotatedRecord> =
        dataset.records.iter().map(|r| (r.record_id.as_str(), r)).collect();
    for batch in &manifest.batches {
        let present: Vec<&AnnotatedRecord> = batch.record_ids.iter().filter_map(|id| by_id.get(id.as_str()).copied()).collect();
        let stats = DatasetStats::of(present);
        let checks = [
            ("records", batch.record_ids.len(), stats.records),
            ("code annotations", batch.code_annotations, stats.code_annotations),
            ("evidence texts", batch.evidence_texts, stats.evidence_texts),
        ];
        for (what, expected, found) in checks {
            if expected != found {
                return Err(EvalError::ManifestMismatch {
                    what: format!("{} {what}", batch.name),
                    expected,
                    found,
                });
            }
        }
    }
    Ok(())
}

fn io_err(path: &Path, e: std::io::Error) -> EvalError {
    EvalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn load_manifest(path: &Path) -> Result<DatasetManifest, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| EvalError::SchemaViolation {
        file: path.display().to_string(),
        field: format!("manifest: {e}"),
    })
}

fn load_file<T>(path: &Path, parse: impl Fn(&Value) -> Result<T, String>) -> Result<Vec<T>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let file = path.display().to_string();
    let violation = |field: String| EvalError::SchemaViolation {
        file: file.clone(),
        field,
    };
    let values: Vec<Value> = if path.extension().is_some_and(|e| e == "jsonl") {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| violation(format!("line {}: {e}", i + 1))))
            .collect::<Result<_, _>>()?
    } else {
        match serde_json::from_str(&text).map_err(|e| violation(format!("json: {e}")))? {
            Value::Array(a) => a,
            v => vec![v],
        }
    };
    values
        .iter()
        .map(|v| parse(v).map_err(violation))
        .collect()
}

fn record_id(v: &Value, m: &SchemaMapping) -> Result<String, String> {
    match v.get(&m.record_id) {
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        _ => Err(m.record_id.clone()),
    }
}

fn record_text(v: &Value, m: &SchemaMapping) -> Result<String, String> {
    v.get(&m.text).and_then(Value::as_str).map(str::to_string).ok_or_else(|| m.text.clone())
}

fn parse_record(v: &Value, m: &SchemaMapping) -> Result<AnnotatedRecord, String> {
    let record_id = record_id(v, m)?;
    let text = record_text(v, m)?;
    let annotations = v
        .get(&m.annotations)
        .and_then(Value::as_array)
        .ok_or_else(|| m.annotations.clone())?;
    let gold = annotations
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let at = |f: &str| format!("{}[{i}].{f}", m.annotations);
            let diagnosis = a
                .get(&m.diagnosis)
                .and_then(Value::as_str)
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| at(&m.diagnosis))?
                .to_string();
            let icd_code = a
                .get(&m.code)
                .and_then(Value::as_str)
                .map(str::trim)
                .filter(|c| is_canonical_code(c))
                .ok_or_else(|| at(&m.code))?
                .to_string();
            let evidence_texts = match a.get(&m.evidence) {
                None | Some(Value::Null) => Vec::new(),
                Some(Value::Array(items)) => items
                    .iter()
                    .map(|e| e.as_str().map(str::to_string).ok_or_else(|| at(&m.evidence)))
                    .collect::<Result<_, _>>()?,
                Some(_) => return Err(at(&m.evidence)),
            };
            Ok(GoldAnnotation {
                diagnosis,
                icd_code,
                evidence_texts,
            })
        })
        .collect::<Result<_, String>>()?;
    Ok(AnnotatedRecord { record_id, text, gold })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) {
        std::fs::write(dir.join(name), body).unwrap();
    }

    const R1: &str = r#"{"record_id":"r1","text":"depression","annotations":[{"diagnosis":"depression","icd10":"F32.A","evidence":["a","b"]}]}"#;
    const R2: &str = r#"{"record_id":"r2","text":"knee","annotations":[{"diagnosis":"knee contusion","icd10":"S80.01XA","evidence":["c"]},{"diagnosis":"x","icd10":"F41.9"}]}"#;

    #[test]
    fn loads_directory_with_manifest() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "r1.json", R1);
        write(dir.path(), "r2.json", R2);
        write(
            dir.path(),
            MANIFEST_FILE,
            r#"{"batches":[{"name":"batch-1","record_ids":["r1","r2"],"code_annotations":3,"evidence_texts":3}]}"#,
        );
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(
            ds.stats(),
            DatasetStats {
                records: 2,
                code_annotations: 3,
                evidence_texts: 3
            }
        );
        assert_eq!(ds.batch("batch-1").unwrap().len(), 2);
    }

    #[test]
    fn manifest_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "r1.json", R1);
        write(
            dir.path(),
            MANIFEST_FILE,
            r#"{"batches":[{"name":"batch-1","record_ids":["r1"],"code_annotations":1,"evidence_texts":5}]}"#,
        );
        assert_eq!(
            load_dataset(dir.path()),
            Err(EvalError::ManifestMismatch {
                what: "batch-1 evidence texts".into(),
                expected: 5,
                found: 2
            })
        );
    }

    #[test]
    fn bad_code_is_schema_violation() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "r.json",
            r#"{"record_id":"r","text":"t","annotations":[{"diagnosis":"d","icd10":"X999","evidence":[]}]}"#,
        );
        assert!(matches!(
            load_dataset(dir.path()),
            Err(EvalError::SchemaViolation { field, .. }) if field == "annotations[0].icd10"
        ));
    }

    #[test]
    fn empty_directory_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap(), Dataset::default());
    }

    #[test]
    fn jsonl_bundle_and_mapping() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bundle.jsonl");
        std::fs::write(
            &path,
            "{\"id\":7,\"note\":\"t\",\"labels\":[{\"dx\":\"d\",\"code\":\"F32.A\",\"spans\":[\"e\"]}]}\n\n",
        )
        .unwrap();
        let mapping = SchemaMapping {
            record_id: "id".into(),
            text: "note".into(),
            annotations: "labels".into(),
            diagnosis: "dx".into(),
            code: "code".into(),
            evidence: "spans".into(),
        };
        let ds = load_dataset_with(&path, &mapping).unwrap();
        assert_eq!(ds.records[0].record_id, "7");
        assert_eq!(ds.records[0].gold[0].evidence_texts, ["e"]);
    }

    #[test]
    fn plain_records_load_without_annotations() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        std::fs::write(&path, "{\"record_id\":\"a\",\"text\":\"note\"}\n").unwrap();
        let records = load_records(&path, &SchemaMapping::default()).unwrap();
        assert_eq!(records, [MedicalRecord::new("a", "note")]);
        assert!(load_dataset(&path).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.json", R1);
        write(dir.path(), "b.json", R1);
        assert!(matches!(load_dataset(dir.path()), Err(EvalError::SchemaViolation { .. })));
    }
}
