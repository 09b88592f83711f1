//! Text embeddings: the vector type, the embedder contract and its two
//! implementations, and the line-delimited vector store.

mod deterministic;
mod remote;
mod store;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retry::RetryPolicy;
use crate::scalar::Scalar;

pub use deterministic::{deterministic_test_embed, word_tokens, DeterministicEmbedder};
pub use remote::RemoteEmbedder;
pub use store::{load_vectors, save_vectors, VectorStore};

pub const DEFAULT_DIMENSION: usize = 768;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("invalid vector: {0}")]
    InvalidVector(String),
    #[error("embedder configuration: {0}")]
    Config(String),
    #[error("embedding endpoint failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("embedder contract violated: {0}")]
    Contract(String),
    #[error("vector store {}: {message}", line.map(|l| format!("line {l}")).unwrap_or_else(|| "error".into()))]
    Storage { line: Option<usize>, message: String },
}

/// A fixed-dimension vector of finite values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<T>", into = "Vec<T>")]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct EmbeddingVector<T: Scalar = f64> {
    values: Vec<T>,
}

impl<T: Scalar> EmbeddingVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::InvalidVector("dimension must be positive".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::InvalidVector(format!(
                "non-finite value at coordinate {i}"
            )));
        }
        Ok(Self { values })
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn dot(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a * b)
            .sum()
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    /// Converts to another scalar type. Narrowing that overflows to infinity
    /// is rejected.
    pub fn cast<U: Scalar>(&self) -> Result<EmbeddingVector<U>, EmbeddingError> {
        let values = self
            .values
            .iter()
            .map(|v| U::from(*v).ok_or_else(|| EmbeddingError::InvalidVector("cast".into())))
            .collect::<Result<Vec<_>, _>>()?;
        EmbeddingVector::new(values)
    }
}

impl<T: Scalar> TryFrom<Vec<T>> for EmbeddingVector<T> {
    type Error = EmbeddingError;

    fn try_from(values: Vec<T>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl<T: Scalar> From<EmbeddingVector<T>> for Vec<T> {
    fn from(v: EmbeddingVector<T>) -> Self {
        v.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedderKind {
    DeterministicTest,
    RemoteEndpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    pub dimension: usize,
    /// Seed for the deterministic embedder.
    pub seed: u64,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Name of the environment variable holding the bearer token.
    pub auth_env: Option<String>,
    pub parallelism: usize,
    pub batch_size: usize,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            kind: EmbedderKind::DeterministicTest,
            dimension: DEFAULT_DIMENSION,
            seed: 0,
            endpoint: None,
            model: None,
            auth_env: None,
            parallelism: 4,
            batch_size: 32,
            timeout_secs: 60,
            retry: RetryPolicy::default(),
        }
    }
}

impl EmbedderConfig {
    pub fn deterministic(dimension: usize, seed: u64) -> Self {
        Self {
            dimension,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.dimension < 2 {
            return Err(EmbeddingError::Config(format!(
                "dimension must be at least 2, got {}",
                self.dimension
            )));
        }
        if self.kind == EmbedderKind::RemoteEndpoint && self.endpoint.is_none() {
            return Err(EmbeddingError::Config("remote embedder needs an endpoint".into()));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Arc<dyn Embedder>, EmbeddingError> {
        self.validate()?;
        Ok(match self.kind {
            EmbedderKind::DeterministicTest => {
                Arc::new(DeterministicEmbedder::new(self.seed, self.dimension)?)
            }
            EmbedderKind::RemoteEndpoint => Arc::new(RemoteEmbedder::from_config(self)?),
        })
    }
}

/// Maps texts to vectors. Implementations are shared across threads.
pub trait Embedder: Send + Sync {
    /// Stable identifier recorded in knowledge-document fingerprints.
    fn id(&self) -> String;

    fn dimension(&self) -> usize;

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError>;
}

/// Embeds `texts` and checks the count and dimension contract.
pub fn embed_with(
    embedder: &dyn Embedder,
    texts: &[String],
) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let vectors = embedder.embed_batch(texts)?;
    if vectors.len() != texts.len() {
        return Err(EmbeddingError::Contract(format!(
            "expected {} vectors, got {}",
            texts.len(),
            vectors.len()
        )));
    }
    let dim = embedder.dimension();
    if let Some(v) = vectors.iter().find(|v| v.dimension() != dim) {
        return Err(EmbeddingError::Contract(format!(
            "expected dimension {dim}, got {}",
            v.dimension()
        )));
    }
    Ok(vectors)
}

pub fn embed_texts(
    texts: &[String],
    config: &EmbedderConfig,
) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
    let embedder = config.build()?;
    embed_with(embedder.as_ref(), texts)
}
