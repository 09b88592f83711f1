//! Chat-completions client: one user message carrying the rendered prompt.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::backend::{BackendError, ChatBackend, ChatRequest, ChatResponse, Usage};
use super::{BackendConfig, GatewayError};

#[derive(Serialize)]
struct Message<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    messages: [Message<'a>; 1],
    temperature: f32,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<WireUsage>,
    #[serde(default)]
    model: Option<String>,
}

pub struct RemoteChatBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    token: Option<String>,
    inst_wrap: bool,
    temperature: f32,
    max_tokens: u32,
}

impl RemoteChatBackend {
    pub fn from_config(config: &BackendConfig) -> Result<Self, GatewayError> {
        let endpoint = config
            .endpoint
            .clone()
            .ok_or_else(|| GatewayError::Config(format!("backend `{}` has no endpoint", config.model)))?;
        let token = match &config.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                GatewayError::Config(format!("environment variable `{var}` is not set"))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(Self {
            client,
            endpoint,
            model: config.model.clone(),
            token,
            inst_wrap: config.inst_wrap,
            temperature: config.temperature,
            max_tokens: config.max_output_tokens,
        })
    }
}

impl ChatBackend for RemoteChatBackend {
    fn id(&self) -> String {
        format!("remote:{}@{}", self.model, self.endpoint)
    }

    fn model(&self) -> String {
        self.model.clone()
    }

    fn inst_wrap(&self) -> bool {
        self.inst_wrap
    }

    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let body = CompletionRequest {
            model: &self.model,
            messages: [Message {
                role: "user",
                content: &request.prompt,
            }],
            // the configured sampling settings override the request defaults
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        };
        let mut http = self
            .client
            .post(&self.endpoint)
            .header("x-correlation-id", &request.correlation_id)
            .json(&body);
        if let Some(token) = &self.token {
            http = http.bearer_auth(token);
        }
        let started = Instant::now();
        let resp = http.send().map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || matches!(status.as_u16(), 408 | 429) {
            return Err(BackendError::Transport(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let detail = resp.text().unwrap_or_default();
            return Err(BackendError::Refusal(format!("HTTP {status}: {detail}")));
        }
        let parsed: CompletionResponse = resp
            .json()
            .map_err(|e| BackendError::Refusal(format!("malformed response: {e}")))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Refusal("response has no choices".into()))?;
        Ok(ChatResponse {
            text,
            model: parsed.model.unwrap_or_else(|| self.model.clone()),
            usage: parsed.usage.map(|u| Usage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            }),
            correlation_id: request.correlation_id.clone(),
            attempts: 1,
            latency_ms: Some(started.elapsed().as_millis() as u64),
        })
    }
}
