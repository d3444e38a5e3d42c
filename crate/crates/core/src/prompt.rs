//! Plain-text prompt templates with `{{name}}` placeholders.

use std::path::Path;

use thiserror::Error;

use crate::llm::hex_sha256;

pub const EXTRACTION_TEMPLATE_V1: &str = include_str!("../prompts/extraction_v1.txt");
pub const RERANK_TEMPLATE_V1: &str = include_str!("../prompts/rerank_v1.txt");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("template {template:?} is missing placeholder {{{{{placeholder}}}}}")]
    MissingPlaceholder { template: String, placeholder: String },
    #[error("cannot read template {path}: {message}")]
    Read { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    name: String,
    text: String,
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            text: text.into(),
        }
    }

    pub fn extraction_default() -> Self {
        Self::new("extraction_v1", EXTRACTION_TEMPLATE_V1)
    }

    pub fn rerank_default() -> Self {
        Self::new("rerank_v1", RERANK_TEMPLATE_V1)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| PromptError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(Self::new(name, text))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Hex SHA-256 of the template text, recorded in run manifests.
    pub fn hash(&self) -> String {
        hex_sha256(self.text.as_bytes())
    }

    pub fn require(&self, placeholders: &[&str]) -> Result<(), PromptError> {
        for p in placeholders {
            if !self.text.contains(&format!("{{{{{p}}}}}")) {
                return Err(PromptError::MissingPlaceholder {
                    template: self.name.clone(),
                    placeholder: (*p).to_string(),
                });
            }
        }
        Ok(())
    }

    /// Single-pass substitution: placeholder-like text inside values is left alone.
    /// Unknown placeholders are kept verbatim.
    pub fn render(&self, values: &[(&str, &str)]) -> String {
        let mut out = String::with_capacity(self.text.len());
        let mut rest = self.text.as_str();
        while let Some(open) = rest.find("{{") {
            out.push_str(&rest[..open]);
            let after = &rest[open + 2..];
            match after.find("}}") {
                Some(close) => {
                    let key = &after[..close];
                    match values.iter().find(|(k, _)| *k == key) {
                        Some((_, v)) => out.push_str(v),
                        None => {
                            out.push_str("{{");
                            out.push_str(key);
                            out.push_str("}}");
                        }
                    }
                    rest = &after[close + 2..];
                }
                None => {
                    out.push_str(&rest[open..]);
                    rest = "";
                }
            }
        }
        out.push_str(rest);
        out
    }
}
