//! Command-line front end. Flags override the config file; environment
//! variables are read only for API keys.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use thiserror::Error;

use crate::config::{load_ontology_files, AppConfig, ConfigError, LlmKind};
use crate::embedding::EmbeddingError;
use crate::evalkit::{curve_to_csv, evaluate, load_dataset, load_records, EvalError, EvaluateOptions, SchemaMapping};
use crate::llm::{LlmProvider, RecordingProvider};
use crate::pipeline::{read_predictions, Mode, PipelineError};
use crate::service::{serve, AppState, ServiceOptions, StoreError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{0}")]
    Usage(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Pipeline(_) => "pipeline",
            CliError::Eval(_) => "evaluation",
            CliError::Embedding(_) => "embedding",
            CliError::Store(_) => "store",
            CliError::Usage(_) => "usage",
            CliError::Io(_) => "io",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "medcoder", version, about = "ICD-10-CM coding pipeline: extract, retrieve, re-rank")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print errors as JSON on stderr.
    #[arg(long, global = true)]
    pub json: bool,
    /// Code table TSV, overriding `ontology.codes`.
    #[arg(long, global = true)]
    pub ontology: Option<PathBuf>,
    #[arg(long, global = true)]
    pub synonyms: Option<PathBuf>,
    /// Vector index file, overriding `index.path`.
    #[arg(long, global = true)]
    pub index: Option<PathBuf>,
    /// Mock fixture file; selects the mock provider.
    #[arg(long, global = true)]
    pub fixtures: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a code table (and synonyms) and print a summary.
    IngestOntology {
        tsv: PathBuf,
        #[arg(long)]
        blocks: Option<PathBuf>,
        /// Write the normalized tables into this directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Embed every billable description and synonym and save the index.
    BuildIndex {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the pipeline over records and write JSON-lines predictions.
    Run {
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        k_retrieve: Option<usize>,
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keep raw LLM transcripts in the output.
        #[arg(long)]
        audit: bool,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Score predictions against an annotated dataset.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Comma-separated cutoffs, for example 1,2,3,5,10.
        #[arg(long, value_delimiter = ',')]
        sweep_k: Vec<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write the per-k table as CSV.
        #[arg(long)]
        curve_csv: Option<PathBuf>,
        #[arg(long)]
        evidence_threshold: Option<f64>,
    },
    /// Start the coder service.
    Serve {
        #[arg(long)]
        addr: Option<String>,
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        selections: Option<PathBuf>,
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
    /// Re-record LLM fixtures by running the pipeline against a live provider.
    RecordFixtures {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "full")]
        mode: String,
    },
}

/// Writes a line to stdout. A closed pipe (e.g. `| head`) is not an error.
fn emit(text: impl std::fmt::Display) -> Result<(), CliError> {
    use std::io::Write;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(io(e)),
        _ => Ok(()),
    }
}

fn io(e: impl std::fmt::Display) -> CliError {
    CliError::Io(e.to_string())
}

impl GlobalArgs {
    pub fn app_config(&self) -> Result<AppConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => AppConfig::load(p)?,
            None => AppConfig::default(),
        };
        if let Some(p) = &self.ontology {
            cfg.ontology.codes = Some(p.clone());
        }
        if let Some(p) = &self.synonyms {
            cfg.ontology.synonyms = Some(p.clone());
        }
        if let Some(p) = &self.index {
            cfg.index.path = Some(p.clone());
        }
        if let Some(p) = &self.fixtures {
            cfg.llm.provider = LlmKind::Mock;
            cfg.llm.fixtures = Some(p.clone());
        }
        Ok(cfg)
    }
}

/// Parses arguments, runs, and prints errors.
pub fn main() -> ExitCode {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .try_init();
    let cli = Cli::parse();
    let json = cli.global.json;
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            if json {
                eprintln!("{}", json!({"error": e.kind(), "message": e.to_string()}));
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::FAILURE
        }
    }
}

/// Exit code 2 signals a batch where some records failed.
pub fn run(cli: Cli) -> Result<ExitCode, CliError> {
    let mut cfg = cli.global.app_config()?;
    match cli.command {
        Command::IngestOntology { tsv, blocks, out_dir } => {
            let synonyms = cli.global.synonyms.clone().or(cfg.ontology.synonyms.clone());
            let blocks = blocks.or(cfg.ontology.blocks.clone());
            let ontology = load_ontology_files(&tsv, synonyms.as_deref(), blocks.as_deref())?;
            if let Some(dir) = out_dir {
                std::fs::create_dir_all(&dir).map_err(io)?;
                std::fs::write(dir.join("codes.tsv"), ontology.to_tsv()).map_err(io)?;
                std::fs::write(dir.join("synonyms.tsv"), ontology.synonyms_to_tsv()).map_err(io)?;
            }
            let chapters: std::collections::BTreeSet<&str> =
                ontology.codes().map(|c| c.chapter.as_str()).filter(|c| !c.is_empty()).collect();
            emit(json!({
                "codes": ontology.len(),
                "billable": ontology.billable_codes().count(),
                "synonyms": ontology.synonym_count(),
                "chapters": chapters.len(),
            }))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::BuildIndex { out } => {
            let ontology = cfg.load_ontology()?;
            let embedder = cfg.embedder()?;
            let out = out
                .or(cfg.index.path.clone())
                .ok_or_else(|| CliError::Usage("give --out or index.path".into()))?;
            let index = crate::embedding::build_index(&ontology, embedder.as_ref())?;
            index.save(&out)?;
            emit(json!({"entries": index.len(), "dim": index.dim(), "embedder": index.embedder_id(), "path": out}))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Run {
            mode,
            k,
            k_retrieve,
            records,
            out,
            audit,
            workers,
        } => {
            if let Some(m) = mode {
                cfg.pipeline.mode = m.parse()?;
            }
            if let Some(k) = k {
                cfg.pipeline.k = k;
            }
            if let Some(k) = k_retrieve {
                cfg.pipeline.k_retrieve = k;
            }
            if let Some(w) = workers {
                cfg.pipeline.workers = w;
            }
            cfg.pipeline.audit |= audit;
            let pipeline = cfg.pipeline()?;
            let records = load_records(&records, &SchemaMapping::default())?;
            let output = pipeline.run_batch(&records, &cfg.pipeline)?;
            output.write(&out)?;
            eprintln!(
                "{} records: {} ok, {} failed",
                records.len(),
                output.manifest.succeeded,
                output.manifest.failed
            );
            Ok(if output.manifest.failed > 0 {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Evaluate {
            pred,
            gold,
            sweep_k,
            report,
            curve_csv,
            evidence_threshold,
        } => {
            let results = read_predictions(&pred)?;
            let dataset = load_dataset(&gold)?;
            let mut options = EvaluateOptions {
                sweep: sweep_k,
                ..EvaluateOptions::default()
            };
            if let Some(t) = evidence_threshold {
                options.evidence_threshold = t;
            }
            let rep = evaluate(&results, &dataset, &options)?;
            let text = serde_json::to_string_pretty(&rep).expect("report serializes");
            match report {
                Some(p) => std::fs::write(&p, &text).map_err(io)?,
                None => emit(&text)?,
            }
            if let Some(p) = curve_csv {
                std::fs::write(p, curve_to_csv(&rep.per_k)).map_err(io)?;
            }
            eprintln!(
                "codes: tp={} fp={} fn={} P={:.4} R={:.4} F1={:.4}",
                rep.codes.tp, rep.codes.fp, rep.codes.fn_, rep.codes.micro_precision, rep.codes.micro_recall, rep.codes.micro_f1
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve {
            addr,
            records,
            selections,
            static_dir,
        } => {
            cfg.pipeline.mode = Mode::Full;
            cfg.pipeline.k = cfg.pipeline.k.max(crate::service::TOP_CODES);
            let addr = addr.unwrap_or(cfg.service.addr.clone());
            let addr: std::net::SocketAddr = addr.parse().map_err(|e| CliError::Usage(format!("bad --addr {addr}: {e}")))?;
            let records_path = records
                .or(cfg.service.records.clone())
                .ok_or_else(|| CliError::Usage("give --records or service.records".into()))?;
            let records = load_records(&records_path, &SchemaMapping::default())?;
            let pipeline = cfg.pipeline()?;
            let mut options = ServiceOptions::new(selections.unwrap_or(cfg.service.selections.clone()));
            options.pipeline_config = cfg.pipeline.clone();
            options.static_dir = static_dir.or(cfg.service.static_dir.clone());
            options.bearer_token = cfg.service.bearer_token.clone();
            let state = Arc::new(AppState::new(pipeline, records, options)?);
            let rt = tokio::runtime::Runtime::new().map_err(io)?;
            rt.block_on(serve(addr, state)).map_err(io)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::RecordFixtures { records, out, mode } => {
            if cfg.llm.provider != LlmKind::Remote {
                return Err(CliError::Usage("record-fixtures needs llm.provider = \"remote\"".into()));
            }
            cfg.pipeline.mode = mode.parse()?;
            cfg.llm.cache = false;
            let live = cfg.llm()?;
            let recorder: Arc<dyn LlmProvider> = Arc::new(RecordingProvider::new(live, &out).map_err(|e| CliError::Io(e.to_string()))?);
            let pipeline = cfg.pipeline()?.with_llm(recorder);
            let records = load_records(&records, &SchemaMapping::default())?;
            let output = pipeline.run_batch(&records, &cfg.pipeline)?;
            eprintln!("recorded fixtures for {} records into {}", output.manifest.succeeded, out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_run_flags() {
        let cli = Cli::try_parse_from([
            "medcoder", "--json", "run", "--mode", "prompt-retrieve", "--k", "5", "--records", "r.jsonl", "--out", "o.jsonl",
        ])
        .unwrap();
        assert!(cli.global.json);
        assert!(matches!(cli.command, Command::Run { k: Some(5), .. }));
        let cli = Cli::try_parse_from(["medcoder", "evaluate", "--pred", "p", "--gold", "g", "--sweep-k", "1,2,3"]).unwrap();
        assert!(matches!(cli.command, Command::Evaluate { ref sweep_k, .. } if sweep_k == &[1, 2, 3]));
    }
}
