//! ICD-10-CM code table ingestion, validation and lookup.
//!
//! The canonical ingestion format is a 4-field TSV:
//!
//! ```text
//! # code  billable  short description  long description
//! I50.1	1	Left ventric heart fail	Left ventricular failure, unspecified
//! ```
//!
//! Codes may be written with or without the dot; they are stored in the
//! canonical dotted, uppercase form.

mod chapters;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chapters::{chapter_for_category, Chapter, CHAPTERS};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OntologyError {
    #[error("malformed line {0}: expected 4 tab-separated fields")]
    MalformedLine(usize),
    #[error("invalid ICD-10 code format: {0:?}")]
    InvalidCodeFormat(String),
    #[error("duplicate code {0}")]
    DuplicateCode(String),
    #[error("invalid billable flag {flag:?} on line {line}")]
    InvalidBillableFlag { line: usize, flag: String },
    #[error("billable code {parent} has descendant {child}")]
    BillableAncestor { parent: String, child: String },
    #[error("synonym line {line} references unknown code {code}")]
    UnknownSynonymCode { line: usize, code: String },
    #[error("malformed synonym line {0}: expected 2 tab-separated fields")]
    MalformedSynonymLine(usize),
    #[error("malformed block line {0}: expected 3 tab-separated fields")]
    MalformedBlockLine(usize),
}

/// A validated ICD-10-CM code with its hierarchy metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IcdCode {
    pub code: String,
    pub short_description: String,
    pub description: String,
    pub category: String,
    /// Roman numeral of the chapter, empty when the category falls in no chapter range.
    pub chapter: String,
    pub block: String,
    pub billable: bool,
}

/// Uppercases, trims and inserts the dot after the third character when absent.
///
/// The result is not guaranteed to be valid; pair with [`validate_code_format`].
pub fn normalize_code(text: &str) -> String {
    let upper = text.trim().to_ascii_uppercase();
    if upper.contains('.') || upper.chars().count() <= 3 {
        return upper;
    }
    let mut chars = upper.chars();
    let head: String = chars.by_ref().take(3).collect();
    format!("{head}.{}", chars.as_str())
}

/// True iff the code is already in canonical form (uppercase, dotted when longer
/// than three characters) and has a valid structure.
pub fn is_canonical_code(text: &str) -> bool {
    is_structurally_valid(text)
}

fn is_structurally_valid(code: &str) -> bool {
    let bytes = code.as_bytes();
    if bytes.len() < 3 {
        return false;
    }
    let alnum = |b: u8| b.is_ascii_uppercase() || b.is_ascii_digit();
    if !bytes[0].is_ascii_uppercase() || !bytes[1].is_ascii_digit() || !alnum(bytes[2]) {
        return false;
    }
    match &bytes[3..] {
        [] => true,
        [b'.', rest @ ..] => (1..=4).contains(&rest.len()) && rest.iter().all(|&b| alnum(b)),
        _ => false,
    }
}

/// Pure format predicate: letter, digit, alphanumeric, then optionally a dot
/// and 1-4 alphanumerics. Case and dot placement are normalized first.
pub fn validate_code_format(text: &str) -> bool {
    is_structurally_valid(&normalize_code(text))
}

/// Category stem and chapter for a code.
pub fn derive_hierarchy(code: &str) -> Result<(String, String), OntologyError> {
    let normalized = normalize_code(code);
    if !is_structurally_valid(&normalized) {
        return Err(OntologyError::InvalidCodeFormat(code.to_string()));
    }
    let category = normalized[..3].to_string();
    let chapter = chapter_for_category(&category)
        .map(|c| c.roman.to_string())
        .unwrap_or_default();
    Ok((category, chapter))
}

fn undotted(code: &str) -> String {
    code.chars().filter(|&c| c != '.').collect()
}

/// Immutable after construction.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Ontology {
    codes: BTreeMap<String, IcdCode>,
    synonyms: BTreeMap<String, Vec<String>>,
}

impl Ontology {
    /// Parses the 4-field TSV code table. `#` lines and blank lines are skipped.
    pub fn parse_code_table<I, S>(lines: I) -> Result<Self, OntologyError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut codes = BTreeMap::new();
        for (idx, line) in lines.into_iter().enumerate() {
            let line_no = idx + 1;
            let line = line.as_ref().trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [raw_code, flag, short, long] = fields[..] else {
                return Err(OntologyError::MalformedLine(line_no));
            };
            let code = normalize_code(raw_code);
            if !is_structurally_valid(&code) {
                return Err(OntologyError::InvalidCodeFormat(raw_code.to_string()));
            }
            let billable = match flag.trim() {
                "1" => true,
                "0" => false,
                other => {
                    return Err(OntologyError::InvalidBillableFlag {
                        line: line_no,
                        flag: other.to_string(),
                    })
                }
            };
            let (category, chapter) = derive_hierarchy(&code)?;
            let entry = IcdCode {
                code: code.clone(),
                short_description: short.trim().to_string(),
                description: long.trim().to_string(),
                category,
                chapter,
                block: String::new(),
                billable,
            };
            if codes.insert(code.clone(), entry).is_some() {
                return Err(OntologyError::DuplicateCode(code));
            }
        }
        check_billable_leaves(&codes)?;
        Ok(Self {
            codes,
            synonyms: BTreeMap::new(),
        })
    }

    /// Adds alternate descriptions from a `code<TAB>synonym` TSV.
    pub fn with_synonyms<I, S>(mut self, lines: I) -> Result<Self, OntologyError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        for (idx, line) in lines.into_iter().enumerate() {
            let line_no = idx + 1;
            let line = line.as_ref().trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((raw_code, synonym)) = line.split_once('\t') else {
                return Err(OntologyError::MalformedSynonymLine(line_no));
            };
            if synonym.contains('\t') || synonym.trim().is_empty() {
                return Err(OntologyError::MalformedSynonymLine(line_no));
            }
            let code = normalize_code(raw_code);
            if !self.codes.contains_key(&code) {
                return Err(OntologyError::UnknownSynonymCode {
                    line: line_no,
                    code,
                });
            }
            let list = self.synonyms.entry(code).or_default();
            let synonym = synonym.trim().to_string();
            if !list.contains(&synonym) {
                list.push(synonym);
            }
        }
        Ok(self)
    }

    /// Labels codes with blocks from a `first<TAB>last<TAB>label` category range table.
    pub fn with_block_table<I, S>(mut self, lines: I) -> Result<Self, OntologyError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut ranges = Vec::new();
        for (idx, line) in lines.into_iter().enumerate() {
            let line = line.as_ref().trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [first, last, label] = fields[..] else {
                return Err(OntologyError::MalformedBlockLine(idx + 1));
            };
            ranges.push((
                first.trim().to_ascii_uppercase(),
                last.trim().to_ascii_uppercase(),
                label.trim().to_string(),
            ));
        }
        for code in self.codes.values_mut() {
            if let Some((_, _, label)) = ranges
                .iter()
                .find(|(first, last, _)| first.as_str() <= code.category.as_str() && code.category.as_str() <= last.as_str())
            {
                code.block = label.clone();
            }
        }
        Ok(self)
    }

    pub fn get(&self, code: &str) -> Option<&IcdCode> {
        self.codes.get(&normalize_code(code))
    }

    /// True iff the code is present and billable. Unknown codes are not billable.
    pub fn is_billable(&self, code: &str) -> bool {
        self.get(code).is_some_and(|c| c.billable)
    }

    /// Format-valid and billable in this ontology.
    pub fn is_valid_billable(&self, code: &str) -> bool {
        validate_code_format(code) && self.is_billable(code)
    }

    pub fn description(&self, code: &str) -> Option<&str> {
        self.get(code).map(|c| c.description.as_str())
    }

    pub fn synonyms(&self, code: &str) -> &[String] {
        self.synonyms
            .get(&normalize_code(code))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn codes(&self) -> impl Iterator<Item = &IcdCode> {
        self.codes.values()
    }

    pub fn billable_codes(&self) -> impl Iterator<Item = &IcdCode> {
        self.codes.values().filter(|c| c.billable)
    }

    pub fn synonym_count(&self) -> usize {
        self.synonyms.values().map(Vec::len).sum()
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Serializes back to the canonical TSV code table.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for c in self.codes.values() {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                c.code,
                u8::from(c.billable),
                c.short_description,
                c.description
            );
        }
        out
    }

    pub fn synonyms_to_tsv(&self) -> String {
        let mut out = String::new();
        for (code, list) in &self.synonyms {
            for s in list {
                let _ = writeln!(out, "{code}\t{s}");
            }
        }
        out
    }
}

fn check_billable_leaves(codes: &BTreeMap<String, IcdCode>) -> Result<(), OntologyError> {
    let billable: BTreeMap<String, &str> = codes
        .values()
        .filter(|c| c.billable)
        .map(|c| (undotted(&c.code), c.code.as_str()))
        .collect();
    for child in codes.values() {
        let flat = undotted(&child.code);
        for len in 3..flat.len() {
            if let Some(parent) = billable.get(&flat[..len]) {
                return Err(OntologyError::BillableAncestor {
                    parent: parent.to_string(),
                    child: child.code.clone(),
                });
            }
        }
    }
    Ok(())
}
