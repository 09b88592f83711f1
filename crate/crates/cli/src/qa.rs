//! Single-question answering over a stored knowledge document.

use std::time::Instant;

use crag_core::evaluation::{cost_estimate, max_prompt_tokens, EvaluationError, TokenizerRegistry, TokenizerSpec};
use crag_core::llm_gateway::{qa_request, Gateway, GatewayError};
use crag_core::pipeline::{KnowledgeStore, Method, PipelineError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AskRequest {
    pub product_id: String,
    pub question: String,
    /// `crag` or `rag`, any case.
    pub method: String,
    /// QA model id; the first configured model when absent.
    #[serde(default)]
    pub model: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskResponse {
    pub product_id: String,
    pub method: Method,
    pub model: String,
    pub answer: String,
    pub prompt_token_count: u64,
    pub estimated_cost: f64,
    /// Backend-reported latency when available, otherwise wall time.
    pub elapsed_ms: u64,
}

#[derive(Debug, Error)]
pub enum AskError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("generation failed (correlation id {correlation_id}): {message}")]
    Upstream { message: String, correlation_id: String },
    #[error("{0}")]
    Internal(String),
}

impl From<GatewayError> for AskError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Contract(m) => AskError::BadRequest(m),
            other => AskError::Upstream {
                correlation_id: other.correlation_id().unwrap_or_default().to_string(),
                message: other.to_string(),
            },
        }
    }
}

impl From<EvaluationError> for AskError {
    fn from(e: EvaluationError) -> Self {
        match e {
            EvaluationError::Contract(m) => AskError::BadRequest(m),
            other => AskError::Internal(other.to_string()),
        }
    }
}

/// Everything `answer_question` needs besides the request itself.
pub struct QaContext<'a> {
    pub store: &'a KnowledgeStore,
    pub tokenizers: &'a [TokenizerSpec],
    pub registry: &'a TokenizerRegistry,
    pub price_per_1k: f64,
}

pub fn answer_question(
    product_id: &str,
    question: &str,
    method: Method,
    model: &str,
    gateway: &Gateway,
    ctx: &QaContext<'_>,
) -> Result<AskResponse, AskError> {
    if question.trim().is_empty() {
        return Err(AskError::BadRequest("question is empty".into()));
    }
    let doc = ctx.store.load(product_id, method).map_err(|e| match e {
        PipelineError::ProductNotFound { .. } | PipelineError::MethodNotFound { .. } => {
            AskError::NotFound(e.to_string())
        }
        other => AskError::Internal(other.to_string()),
    })?;
    let prompt_token_count = max_prompt_tokens(&doc, question, ctx.tokenizers, ctx.registry)?;
    let request = qa_request(&doc.text, question, &gateway.model(), gateway.inst_wrap())?;
    let started = Instant::now();
    let response = gateway.complete(request)?;
    tracing::info!(
        correlation_id = %response.correlation_id,
        product = product_id,
        %method,
        model,
        attempts = response.attempts,
        "answered"
    );
    Ok(AskResponse {
        product_id: product_id.to_string(),
        method,
        model: model.to_string(),
        answer: response.text,
        prompt_token_count,
        estimated_cost: cost_estimate(prompt_token_count, ctx.price_per_1k),
        elapsed_ms: response
            .latency_ms
            .unwrap_or_else(|| started.elapsed().as_millis() as u64),
    })
}
