//! TOML run configuration and construction of pipeline components from it.
//!
//! Relative paths resolve against the config file's directory. API keys come
//! only from the environment.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{build_index, EmbeddingError, EmbeddingProvider, HashingEmbedder, RemoteEmbedder, RemoteEmbedderConfig, VectorIndex};
use crate::llm::{CachedProvider, ConcurrencyLimited, LlmError, LlmProvider, MockProvider, RemoteLlmConfig, RemoteProvider};
use crate::ontology::{Ontology, OntologyError};
use crate::pipeline::{Pipeline, PipelineConfig};
use crate::prompt::{PromptError, PromptTemplate};
use crate::retry::RetryPolicy;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("missing config value {0}")]
    Missing(&'static str),
    #[error(transparent)]
    Ontology(#[from] OntologyError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OntologyConfig {
    pub codes: Option<PathBuf>,
    pub synonyms: Option<PathBuf>,
    pub blocks: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    #[default]
    Hashing,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub provider: EmbeddingKind,
    pub dim: usize,
    pub url: Option<String>,
    pub model: Option<String>,
    pub timeout_secs: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            provider: EmbeddingKind::Hashing,
            dim: 256,
            url: None,
            model: None,
            timeout_secs: 30,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexConfig {
    /// Built in memory from the ontology when absent or missing on disk.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmKind {
    #[default]
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub provider: LlmKind,
    /// Fixture file replayed by the mock provider.
    pub fixtures: Option<PathBuf>,
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub timeout_secs: u64,
    pub cache: bool,
    /// Concurrent in-flight provider calls.
    pub concurrency: usize,
    pub retry: RetryPolicy,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            provider: LlmKind::Mock,
            fixtures: None,
            base_url: None,
            model: None,
            timeout_secs: 120,
            cache: true,
            concurrency: 4,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplateConfig {
    pub extraction: Option<PathBuf>,
    pub rerank: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub addr: String,
    pub records: Option<PathBuf>,
    pub selections: PathBuf,
    pub static_dir: Option<PathBuf>,
    pub bearer_token: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            addr: "127.0.0.1:8080".into(),
            records: None,
            selections: PathBuf::from("selections.jsonl"),
            static_dir: None,
            bearer_token: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub ontology: OntologyConfig,
    pub embedding: EmbeddingConfig,
    pub index: IndexConfig,
    pub llm: LlmConfig,
    pub templates: TemplateConfig,
    pub pipeline: PipelineConfig,
    pub service: ServiceConfig,
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: "<inline>".into(),
            message: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let mut cfg: Self = toml::from_str(&read(path)?).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.ontology.codes);
        resolve(base, &mut self.ontology.synonyms);
        resolve(base, &mut self.ontology.blocks);
        resolve(base, &mut self.index.path);
        resolve(base, &mut self.llm.fixtures);
        resolve(base, &mut self.templates.extraction);
        resolve(base, &mut self.templates.rerank);
        resolve(base, &mut self.service.records);
        resolve(base, &mut self.service.static_dir);
        let mut sel = Some(self.service.selections.clone());
        resolve(base, &mut sel);
        self.service.selections = sel.expect("set above");
    }

    pub fn load_ontology(&self) -> Result<Ontology, ConfigError> {
        let codes = self.ontology.codes.as_ref().ok_or(ConfigError::Missing("ontology.codes"))?;
        load_ontology_files(codes, self.ontology.synonyms.as_deref(), self.ontology.blocks.as_deref())
    }

    pub fn embedder(&self) -> Result<Arc<dyn EmbeddingProvider>, ConfigError> {
        Ok(match self.embedding.provider {
            EmbeddingKind::Hashing => Arc::new(HashingEmbedder::new(self.embedding.dim)),
            EmbeddingKind::Remote => Arc::new(RemoteEmbedder::new(RemoteEmbedderConfig {
                url: self.embedding.url.clone().ok_or(ConfigError::Missing("embedding.url"))?,
                model: self.embedding.model.clone().ok_or(ConfigError::Missing("embedding.model"))?,
                timeout_secs: self.embedding.timeout_secs,
            })),
        })
    }

    /// Loads the index file when present, otherwise builds it.
    pub fn index(&self, ontology: &Ontology, embedder: &dyn EmbeddingProvider) -> Result<VectorIndex, ConfigError> {
        match &self.index.path {
            Some(p) if p.exists() => {
                let index = VectorIndex::load(p)?;
                if index.embedder_id() != embedder.id() {
                    tracing::warn!(index = index.embedder_id(), embedder = %embedder.id(), "index was built with another embedder");
                }
                Ok(index)
            }
            _ => Ok(build_index(ontology, embedder)?),
        }
    }

    pub fn llm(&self) -> Result<Arc<dyn LlmProvider>, ConfigError> {
        let limit = self.llm.concurrency.max(1);
        let base: Arc<dyn LlmProvider> = match self.llm.provider {
            LlmKind::Mock => {
                let path = self.llm.fixtures.as_ref().ok_or(ConfigError::Missing("llm.fixtures"))?;
                Arc::new(MockProvider::from_file(path)?)
            }
            LlmKind::Remote => Arc::new(
                RemoteProvider::new(RemoteLlmConfig {
                    base_url: self.llm.base_url.clone().ok_or(ConfigError::Missing("llm.base_url"))?,
                    model: self.llm.model.clone().ok_or(ConfigError::Missing("llm.model"))?,
                    timeout_secs: self.llm.timeout_secs,
                })
                .with_retry(self.llm.retry),
            ),
        };
        let limited = ConcurrencyLimited::new(base, limit);
        Ok(if self.llm.cache {
            Arc::new(CachedProvider::new(limited))
        } else {
            Arc::new(limited)
        })
    }

    pub fn templates(&self) -> Result<(PromptTemplate, PromptTemplate), ConfigError> {
        let extraction = match &self.templates.extraction {
            Some(p) => PromptTemplate::load(p)?,
            None => PromptTemplate::extraction_default(),
        };
        let rerank = match &self.templates.rerank {
            Some(p) => PromptTemplate::load(p)?,
            None => PromptTemplate::rerank_default(),
        };
        Ok((extraction, rerank))
    }

    /// Ontology, LLM, templates and, for retrieval modes, embedder and index.
    pub fn pipeline(&self) -> Result<Pipeline, ConfigError> {
        let ontology = Arc::new(self.load_ontology()?);
        let (extraction, rerank) = self.templates()?;
        let mut pipeline = Pipeline::new(ontology.clone(), self.llm()?).with_templates(extraction, rerank);
        if self.pipeline.mode.uses_retrieval() {
            let embedder = self.embedder()?;
            let index = Arc::new(self.index(&ontology, embedder.as_ref())?);
            pipeline = pipeline.with_retrieval(index, embedder);
        }
        Ok(pipeline)
    }
}

pub fn load_ontology_files(codes: &Path, synonyms: Option<&Path>, blocks: Option<&Path>) -> Result<Ontology, ConfigError> {
    let mut ontology = Ontology::parse_code_table(read(codes)?.lines())?;
    if let Some(s) = synonyms {
        ontology = ontology.with_synonyms(read(s)?.lines())?;
    }
    if let Some(b) = blocks {
        ontology = ontology.with_block_table(read(b)?.lines())?;
    }
    Ok(ontology)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::Mode;

    #[test]
    fn parses_sections_with_defaults() {
        let cfg = AppConfig::from_toml(
            r#"
            [ontology]
            codes = "codes.tsv"
            [llm]
            provider = "remote"
            base_url = "http://localhost:9"
            model = "m"
            [llm.retry]
            max_attempts = 2
            base_delay = 10
            max_delay = 20
            [pipeline]
            mode = "PROMPT"
            k = 3
            "#,
        )
        .unwrap();
        assert_eq!(cfg.pipeline.mode, Mode::Prompt);
        assert_eq!(cfg.pipeline.k, 3);
        assert_eq!(cfg.pipeline.k_retrieve, 10);
        assert_eq!(cfg.embedding.dim, 256);
        assert_eq!(cfg.llm.retry.max_attempts, 2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(AppConfig::from_toml("[llm]\nprovdier = \"mock\"\n").is_err());
    }

    #[test]
    fn paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("medcoder.toml");
        std::fs::write(&path, "[ontology]\ncodes = \"codes.tsv\"\n[index]\npath = \"/abs/index.mcix\"\n").unwrap();
        let cfg = AppConfig::load(&path).unwrap();
        assert_eq!(cfg.ontology.codes.unwrap(), dir.path().join("codes.tsv"));
        assert_eq!(cfg.index.path.unwrap(), PathBuf::from("/abs/index.mcix"));
        assert_eq!(cfg.service.selections, dir.path().join("selections.jsonl"));
    }
}
