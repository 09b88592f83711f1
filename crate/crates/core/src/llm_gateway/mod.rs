//! Prompt templating for the summarization and question-answering prompts,
//! the chat backend contract with retrying completion, and a deterministic
//! mock model for offline runs.

mod backend;
mod gateway;
mod remote;
mod requests;
mod template;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retry::RetryPolicy;

pub use backend::{
    BackendError, ChatBackend, ChatRequest, ChatResponse, FnBackend, MockBackend, PromptKind,
    Usage, DEFAULT_MAX_OUTPUT_TOKENS, DEFAULT_SUMMARY_BUDGET,
};
pub use gateway::{complete, Gateway};
pub use remote::RemoteChatBackend;
pub use requests::{qa_request, summarization_request, OneShotExample};
pub use template::{PromptTemplate, QA_TEMPLATE, SUMMARIZATION_TEMPLATE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("template error: {0}")]
    Template(String),
    #[error("missing binding for placeholder `{0}`")]
    MissingBinding(String),
    #[error("binding `{0}` has no placeholder in the template")]
    UnknownBinding(String),
    #[error("invalid request: {0}")]
    Contract(String),
    #[error("backend unreachable after {attempts} attempt(s) [{correlation_id}]: {message}")]
    Transport {
        attempts: u32,
        message: String,
        correlation_id: String,
    },
    #[error("generation failed [{correlation_id}]: {message}")]
    Generation {
        message: String,
        correlation_id: String,
    },
    #[error("backend configuration: {0}")]
    Config(String),
}

impl GatewayError {
    pub fn correlation_id(&self) -> Option<&str> {
        match self {
            GatewayError::Transport { correlation_id, .. }
            | GatewayError::Generation { correlation_id, .. } => Some(correlation_id),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Mock,
    Remote,
}

/// One configured model endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Model name sent to the endpoint and echoed in responses.
    pub model: String,
    pub endpoint: Option<String>,
    /// Environment variable holding the bearer token.
    pub auth_env: Option<String>,
    /// Wrap question-answering prompts in `[INST] ... [/INST]`.
    pub inst_wrap: bool,
    /// Concurrent request bound; unbounded when absent.
    pub max_concurrency: Option<usize>,
    /// Token budget of mock summaries.
    pub summary_budget: usize,
    pub temperature: f32,
    pub max_output_tokens: u32,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            model: "mock".into(),
            endpoint: None,
            auth_env: None,
            inst_wrap: false,
            max_concurrency: None,
            summary_budget: DEFAULT_SUMMARY_BUDGET,
            temperature: 0.0,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            timeout_secs: 120,
            retry: RetryPolicy::default(),
        }
    }
}

impl BackendConfig {
    pub fn mock(model: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            ..Self::default()
        }
    }

    pub fn build_backend(&self) -> Result<Arc<dyn ChatBackend>, GatewayError> {
        Ok(match self.kind {
            BackendKind::Mock => Arc::new(MockBackend::new(self.model.clone(), self.summary_budget)),
            BackendKind::Remote => Arc::new(RemoteChatBackend::from_config(self)?),
        })
    }

    pub fn build_gateway(&self) -> Result<Gateway, GatewayError> {
        let limit = match (self.kind, self.max_concurrency) {
            (_, Some(n)) => Some(n.max(1)),
            (BackendKind::Remote, None) => Some(2),
            (BackendKind::Mock, None) => None,
        };
        Ok(Gateway::new(self.build_backend()?, self.retry, limit))
    }
}
