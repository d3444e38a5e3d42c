pub mod cli;
pub mod config;
pub mod embedding;
pub mod evalkit;
pub mod extractor;
pub mod grounding;
mod http;
pub mod llm;
pub mod ontology;
pub mod pipeline;
pub mod prompt;
pub mod reranker;
pub mod retriever;
pub mod retry;
pub mod scripted;
pub mod service;
