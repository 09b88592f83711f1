//! Pipeline stages, question answering and the HTTP service behind the
//! `crag` binary.

pub mod config;
pub mod qa;
pub mod query;
pub mod service;
pub mod stages;

use crag_core::embedding::EmbeddingError;
use crag_core::evaluation::EvaluationError;
use crag_core::ingest::IngestError;
use crag_core::llm_gateway::GatewayError;
use crag_core::pipeline::PipelineError;
use thiserror::Error;

pub use config::AppConfig;
pub use qa::{answer_question, AskError, AskRequest, AskResponse, QaContext};
pub use stages::{BuildReport, IngestSummary};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{artifact} not found; run `{command}` first")]
    MissingPrerequisite { artifact: String, command: String },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Ask(#[from] AskError),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub(crate) fn missing(artifact: impl Into<String>, command: impl Into<String>) -> Self {
        CliError::MissingPrerequisite {
            artifact: artifact.into(),
            command: command.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}
