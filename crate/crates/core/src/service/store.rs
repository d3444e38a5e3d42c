use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::{normalize_code, validate_code_format};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StoreError {
    #[error("invalid codes: {}", .0.join(", "))]
    InvalidCodes(Vec<String>),
    #[error("a selection needs at least one code")]
    EmptySelection,
    #[error("selection store {path}: {message}")]
    Io { path: String, message: String },
}

/// One coder decision. `diagnosis_index` is `None` for record-level additions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub record_id: String,
    pub diagnosis_index: Option<usize>,
    pub chosen_codes: Vec<String>,
    pub entered_manually: bool,
    pub timestamp: DateTime<Utc>,
    pub coder_id: String,
}

/// Splits comma-separated manual entry and validates every code.
pub fn parse_manual_codes(input: &str) -> Result<Vec<String>, StoreError> {
    validate_codes(input.split(',').map(str::trim).filter(|s| !s.is_empty()))
}

/// Normalizes codes, failing with every invalid entry when any is invalid.
pub fn validate_codes<'a>(codes: impl IntoIterator<Item = &'a str>) -> Result<Vec<String>, StoreError> {
    let mut valid = Vec::new();
    let mut invalid = Vec::new();
    for c in codes {
        if validate_code_format(c) {
            let n = normalize_code(c);
            if !valid.contains(&n) {
                valid.push(n);
            }
        } else {
            invalid.push(c.to_string());
        }
    }
    if !invalid.is_empty() {
        return Err(StoreError::InvalidCodes(invalid));
    }
    if valid.is_empty() {
        return Err(StoreError::EmptySelection);
    }
    Ok(valid)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadedSelections {
    /// File order.
    pub entries: Vec<Selection>,
    /// 1-based line numbers moved to the quarantine file during this load.
    pub quarantined: Vec<usize>,
}

impl LoadedSelections {
    /// Latest entry per (record, diagnosis).
    pub fn view(&self) -> BTreeMap<(String, Option<usize>), Selection> {
        let mut out = BTreeMap::new();
        for s in &self.entries {
            out.insert((s.record_id.clone(), s.diagnosis_index), s.clone());
        }
        out
    }

    pub fn latest_for_record(&self, record_id: &str) -> Vec<Selection> {
        self.view()
            .into_iter()
            .filter(|((r, _), _)| r == record_id)
            .map(|(_, s)| s)
            .collect()
    }
}

/// Append-only JSON-lines store. Writers take an exclusive OS file lock and
/// an in-process mutex.
#[derive(Debug)]
pub struct SelectionStore {
    path: PathBuf,
    guard: Mutex<()>,
}

impl SelectionStore {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let path = path.into();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| io_err(&path, e))?;
        }
        Ok(Self {
            path,
            guard: Mutex::new(()),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn quarantine_path(&self) -> PathBuf {
        let mut name = self.path.as_os_str().to_owned();
        name.push(".quarantine");
        name.into()
    }

    fn open_locked(&self) -> Result<File, StoreError> {
        let file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| io_err(&self.path, e))?;
        file.lock().map_err(|e| io_err(&self.path, e))?;
        Ok(file)
    }

    pub fn append(&self, selection: &Selection) -> Result<(), StoreError> {
        let _g = self.guard.lock().unwrap_or_else(|e| e.into_inner());
        let mut file = self.open_locked()?;
        let mut line = serde_json::to_string(selection).expect("selection serializes");
        line.push('\n');
        let written = file.write_all(line.as_bytes()).and_then(|_| file.sync_data());
        let _ = file.unlock();
        written.map_err(|e| io_err(&self.path, e))
    }

    /// Replays the store. Unparseable lines are moved to the quarantine file
    /// and removed from the store; the rest loads.
    pub fn load(&self) -> Result<LoadedSelections, StoreError> {
        let _g = self.guard.lock().unwrap_or_else(|e| e.into_inner());
        if !self.path.exists() {
            return Ok(LoadedSelections::default());
        }
        let file = self.open_locked()?;
        let mut loaded = LoadedSelections::default();
        let mut good = Vec::new();
        let mut bad = Vec::new();
        for (i, line) in BufReader::new(&file).split(b'\n').enumerate() {
            let line = line.map_err(|e| io_err(&self.path, e))?;
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            match serde_json::from_slice::<Selection>(&line) {
                Ok(s) => {
                    loaded.entries.push(s);
                    good.push(line);
                }
                Err(_) => {
                    tracing::warn!(line = i + 1, store = %self.path.display(), "quarantining corrupt selection line");
                    loaded.quarantined.push(i + 1);
                    bad.push(line);
                }
            }
        }
        if !bad.is_empty() {
            let result = self.quarantine(&bad, &good);
            let _ = file.unlock();
            result?;
        } else {
            let _ = file.unlock();
        }
        Ok(loaded)
    }

    fn quarantine(&self, bad: &[Vec<u8>], good: &[Vec<u8>]) -> Result<(), StoreError> {
        let qpath = self.quarantine_path();
        let mut q = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&qpath)
            .map_err(|e| io_err(&qpath, e))?;
        for line in bad {
            q.write_all(line).and_then(|_| q.write_all(b"\n")).map_err(|e| io_err(&qpath, e))?;
        }
        let mut tmp_name = self.path.as_os_str().to_owned();
        tmp_name.push(".tmp");
        let tmp = PathBuf::from(tmp_name);
        let mut body = Vec::new();
        for line in good {
            body.extend_from_slice(line);
            body.push(b'\n');
        }
        std::fs::write(&tmp, body).map_err(|e| io_err(&tmp, e))?;
        std::fs::rename(&tmp, &self.path).map_err(|e| io_err(&self.path, e))
    }
}

fn io_err(path: &Path, e: std::io::Error) -> StoreError {
    StoreError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sel(record: &str, dx: Option<usize>, code: &str) -> Selection {
        Selection {
            record_id: record.into(),
            diagnosis_index: dx,
            chosen_codes: vec![code.into()],
            entered_manually: false,
            timestamp: Utc::now(),
            coder_id: "c1".into(),
        }
    }

    #[test]
    fn manual_entry_parsing() {
        assert_eq!(parse_manual_codes("S80.01XA, M75.42").unwrap(), ["S80.01XA", "M75.42"]);
        assert_eq!(parse_manual_codes("s8001xa").unwrap(), ["S80.01XA"]);
        assert_eq!(
            parse_manual_codes("notacode"),
            Err(StoreError::InvalidCodes(vec!["notacode".into()]))
        );
        assert_eq!(parse_manual_codes(" , "), Err(StoreError::EmptySelection));
        assert!(validate_codes(["BADCODE"]).is_err());
    }

    #[test]
    fn latest_wins_both_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let store = SelectionStore::open(dir.path().join("sel.jsonl")).unwrap();
        assert_eq!(store.load().unwrap(), LoadedSelections::default());
        store.append(&sel("r1", Some(0), "F32.9")).unwrap();
        store.append(&sel("r1", Some(0), "F32.A")).unwrap();
        store.append(&sel("r1", None, "F41.9")).unwrap();
        let loaded = store.load().unwrap();
        assert_eq!(loaded.entries.len(), 3);
        let latest = loaded.latest_for_record("r1");
        assert_eq!(latest.len(), 2);
        assert_eq!(loaded.view()[&("r1".to_string(), Some(0))].chosen_codes, ["F32.A"]);
    }

    #[test]
    fn truncated_line_is_quarantined() {
        let dir = tempfile::tempdir().unwrap();
        let store = SelectionStore::open(dir.path().join("sel.jsonl")).unwrap();
        store.append(&sel("r1", Some(0), "F32.A")).unwrap();
        let mut f = OpenOptions::new().append(true).open(store.path()).unwrap();
        f.write_all(b"{\"record_id\":\"r1\",\"diag").unwrap();
        drop(f);
        let loaded = store.load().unwrap();
        assert_eq!(loaded.entries.len(), 1);
        assert_eq!(loaded.quarantined, [2]);
        let q = std::fs::read_to_string(store.quarantine_path()).unwrap();
        assert!(q.starts_with("{\"record_id\":\"r1\",\"diag"));
        store.append(&sel("r2", Some(0), "F41.9")).unwrap();
        let again = store.load().unwrap();
        assert_eq!(again.entries.len(), 2);
        assert!(again.quarantined.is_empty());
    }
}
