//! Per-product knowledge construction.
//!
//! CRAG embeds a product's reviews, clusters them, asks the summarizer for
//! one summary per cluster and merges the summaries. The RAG baseline hands
//! the model every review.

mod crag;
mod store;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clustering::ClusteringError;
use crate::embedding::EmbeddingError;
use crate::ingest::ProductGroup;
use crate::llm_gateway::GatewayError;

pub use crag::{
    aggregate_summaries, build_crag_knowledge, build_crag_knowledge_with_vectors, crag_digest,
    CragConfig, KSelection,
};
pub use store::{IndexEntry, KnowledgeStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Crag,
    Rag,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Crag => "CRAG",
            Method::Rag => "RAG",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "crag" => Ok(Method::Crag),
            "rag" => Ok(Method::Rag),
            other => Err(format!("unknown method `{other}`, expected crag or rag")),
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Clustering(#[from] ClusteringError),
    #[error("summarizing cluster {cluster_index} of `{product_id}` failed: {source}")]
    Summarization {
        product_id: String,
        cluster_index: usize,
        #[source]
        source: GatewayError,
    },
    #[error("{0}")]
    Contract(String),
    #[error("no knowledge stored for product `{product_id}`")]
    ProductNotFound { product_id: String },
    #[error("product `{product_id}` has no {method} knowledge")]
    MethodNotFound { product_id: String, method: Method },
    #[error("knowledge store: {0}")]
    Storage(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub product_id: String,
    pub cluster_index: usize,
    pub summary_text: String,
    pub source_review_count: usize,
    /// `source_index` of every review in the cluster.
    pub source_indexes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Clusters(Vec<ClusterSummary>),
    Reviews(Vec<usize>),
}

/// What a document was built from. Two builds with equal fingerprints
/// produce the same document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub embedder: Option<String>,
    pub backend: Option<String>,
    /// SHA-256 over the product's reviews and the full build settings.
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeDocument {
    pub product_id: String,
    pub method: Method,
    pub text: String,
    pub provenance: Provenance,
    pub created_with: Fingerprint,
}

pub(crate) fn digest_inputs(group: &ProductGroup, settings: &str) -> String {
    let mut h = Sha256::new();
    h.update(group.product_id.as_bytes());
    h.update([0]);
    for r in &group.reviews {
        h.update(r.source_index.to_le_bytes());
        h.update(r.text.as_bytes());
        h.update([0]);
    }
    h.update(settings.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn rag_digest(group: &ProductGroup) -> String {
    digest_inputs(group, "rag")
}

/// Every review of the product, in source order, as one bullet per line.
pub fn build_rag_knowledge(group: &ProductGroup) -> Result<KnowledgeDocument, PipelineError> {
    if group.is_empty() {
        return Err(PipelineError::Contract(format!(
            "product `{}` has no reviews",
            group.product_id
        )));
    }
    let text = group
        .reviews
        .iter()
        .map(|r| format!("- {}", r.text))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(KnowledgeDocument {
        product_id: group.product_id.clone(),
        method: Method::Rag,
        text,
        provenance: Provenance::Reviews(group.reviews.iter().map(|r| r.source_index).collect()),
        created_with: Fingerprint {
            k: None,
            seed: None,
            embedder: None,
            backend: None,
            digest: rag_digest(group),
        },
    })
}
