//! JSON-over-HTTP embedding client.
//!
//! Request body: `{"model": <optional>, "input": [<text>, ...]}`.
//! Response body: `{"embeddings": [[f64, ...], ...]}` or the OpenAI-style
//! `{"data": [{"embedding": [...]}, ...]}`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Embedder, EmbedderConfig, EmbeddingError, EmbeddingVector};
use crate::retry::RetryPolicy;

#[derive(Serialize)]
struct EmbedRequest<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a str>,
    input: &'a [String],
}

#[derive(Deserialize)]
struct DataItem {
    embedding: Vec<f64>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    #[serde(default)]
    embeddings: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    data: Option<Vec<DataItem>>,
}

enum CallError {
    Transient(String),
    Permanent(String),
}

pub struct RemoteEmbedder {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: Option<String>,
    token: Option<String>,
    dimension: usize,
    parallelism: usize,
    batch_size: usize,
    retry: RetryPolicy,
}

impl std::fmt::Debug for RemoteEmbedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteEmbedder")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .field("dimension", &self.dimension)
            .finish_non_exhaustive()
    }
}

impl RemoteEmbedder {
    pub fn from_config(config: &EmbedderConfig) -> Result<Self, EmbeddingError> {
        let endpoint = config
            .endpoint
            .clone()
            .ok_or_else(|| EmbeddingError::Config("remote embedder needs an endpoint".into()))?;
        let token = match &config.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                EmbeddingError::Config(format!("environment variable `{var}` is not set"))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .build()
            .map_err(|e| EmbeddingError::Config(e.to_string()))?;
        Ok(Self {
            client,
            endpoint,
            model: config.model.clone(),
            token,
            dimension: config.dimension,
            parallelism: config.parallelism.max(1),
            batch_size: config.batch_size.max(1),
            retry: config.retry,
        })
    }

    fn call(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, CallError> {
        let mut req = self.client.post(&self.endpoint).json(&EmbedRequest {
            model: self.model.as_deref(),
            input: texts,
        });
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| CallError::Transient(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 || status.as_u16() == 408 {
            return Err(CallError::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(CallError::Permanent(format!("HTTP {status}")));
        }
        let body: EmbedResponse = resp
            .json()
            .map_err(|e| CallError::Permanent(format!("malformed response: {e}")))?;
        match (body.embeddings, body.data) {
            (Some(e), _) => Ok(e),
            (None, Some(d)) => Ok(d.into_iter().map(|i| i.embedding).collect()),
            (None, None) => Err(CallError::Permanent("response carries no embeddings".into())),
        }
    }

    fn embed_chunk(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        let (raw, _) = self
            .retry
            .run(|e| matches!(e, CallError::Transient(_)), |_| self.call(texts))
            .map_err(|(e, attempts)| EmbeddingError::Transport {
                attempts,
                message: match e {
                    CallError::Transient(m) | CallError::Permanent(m) => m,
                },
            })?;
        if raw.len() != texts.len() {
            return Err(EmbeddingError::Contract(format!(
                "sent {} texts, received {} vectors",
                texts.len(),
                raw.len()
            )));
        }
        raw.into_iter()
            .map(|values| {
                if values.len() != self.dimension {
                    return Err(EmbeddingError::Contract(format!(
                        "expected dimension {}, got {}",
                        self.dimension,
                        values.len()
                    )));
                }
                EmbeddingVector::new(values)
            })
            .collect()
    }
}

impl Embedder for RemoteEmbedder {
    fn id(&self) -> String {
        format!(
            "remote({}{})",
            self.endpoint,
            self.model.as_deref().map(|m| format!(",{m}")).unwrap_or_default()
        )
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    /// Splits into batches, sends up to `parallelism` of them at once and
    /// reassembles results in input order.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        let chunks: Vec<&[String]> = texts.chunks(self.batch_size).collect();
        type Slot = Option<Result<Vec<EmbeddingVector>, EmbeddingError>>;
        let results: Mutex<Vec<Slot>> = Mutex::new((0..chunks.len()).map(|_| None).collect());
        let next = AtomicUsize::new(0);
        let workers = self.parallelism.min(chunks.len()).max(1);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= chunks.len() {
                        break;
                    }
                    let out = self.embed_chunk(chunks[i]);
                    results.lock().expect("embed results lock")[i] = Some(out);
                });
            }
        });
        let mut vectors = Vec::with_capacity(texts.len());
        for slot in results.into_inner().expect("embed results lock") {
            vectors.extend(slot.expect("every chunk is processed")?);
        }
        Ok(vectors)
    }
}
