use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{digest_inputs, ClusterSummary, Fingerprint, KnowledgeDocument, Method, PipelineError, Provenance};
use crate::clustering::{elbow_select_k, kmeans, ClusteringConfig};
use crate::embedding::{embed_with, Embedder};
use crate::ingest::{ProductGroup, DEFAULT_MIN_REVIEWS};
use crate::llm_gateway::{summarization_request, Gateway, OneShotExample};
use crate::Embedding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum KSelection {
    /// Use `ClusteringConfig::k` for every product.
    Fixed,
    /// Pick k per product with the elbow method over `k_min..=k_max`.
    Elbow { k_min: usize, k_max: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CragConfig {
    pub clustering: ClusteringConfig,
    pub k_selection: KSelection,
    pub oneshot: OneShotExample,
    pub min_reviews: usize,
}

impl Default for CragConfig {
    fn default() -> Self {
        Self {
            clustering: ClusteringConfig::default(),
            k_selection: KSelection::Fixed,
            oneshot: OneShotExample::default(),
            min_reviews: DEFAULT_MIN_REVIEWS,
        }
    }
}

/// Merges summaries in cluster order, separated by one blank line.
pub fn aggregate_summaries(summaries: &[ClusterSummary]) -> Result<String, PipelineError> {
    let first = summaries
        .first()
        .ok_or_else(|| PipelineError::Contract("no summaries to aggregate".into()))?;
    if summaries.iter().any(|s| s.product_id != first.product_id) {
        return Err(PipelineError::Contract(
            "summaries belong to different products".into(),
        ));
    }
    let mut ordered: Vec<&ClusterSummary> = summaries.iter().collect();
    ordered.sort_by_key(|s| s.cluster_index);
    Ok(ordered
        .iter()
        .map(|s| s.summary_text.as_str())
        .collect::<Vec<_>>()
        .join("\n\n"))
}

pub fn build_crag_knowledge(
    group: &ProductGroup,
    embedder: &dyn Embedder,
    config: &CragConfig,
    gateway: &Gateway,
) -> Result<KnowledgeDocument, PipelineError> {
    let texts: Vec<String> = group.reviews.iter().map(|r| r.text.clone()).collect();
    let vectors = embed_with(embedder, &texts)?;
    build_crag_knowledge_with_vectors(group, &vectors, &embedder.id(), config, gateway)
}

/// Same as [`build_crag_knowledge`] with review vectors computed up front,
/// one per review in group order.
pub fn build_crag_knowledge_with_vectors(
    group: &ProductGroup,
    vectors: &[Embedding],
    embedder_id: &str,
    config: &CragConfig,
    gateway: &Gateway,
) -> Result<KnowledgeDocument, PipelineError> {
    if group.len() < config.min_reviews.max(1) {
        return Err(PipelineError::Contract(format!(
            "product `{}` has {} reviews, fewer than the minimum {}",
            group.product_id,
            group.len(),
            config.min_reviews
        )));
    }
    if vectors.len() != group.len() {
        return Err(PipelineError::Contract(format!(
            "product `{}` has {} reviews but {} vectors",
            group.product_id,
            group.len(),
            vectors.len()
        )));
    }

    let distinct = group
        .reviews
        .iter()
        .map(|r| r.text.trim())
        .collect::<HashSet<_>>()
        .len();
    let k = match config.k_selection {
        KSelection::Fixed => config.clustering.k,
        KSelection::Elbow { k_min, k_max } => {
            match elbow_select_k(vectors, k_min, k_max.min(distinct), &config.clustering) {
                Ok(curve) => curve.chosen_k,
                Err(e) => {
                    tracing::debug!(product = %group.product_id, "elbow unavailable ({e}), using k={}", config.clustering.k);
                    config.clustering.k
                }
            }
        }
    }
    .min(distinct)
    .max(1);
    let clustering = kmeans(vectors, &config.clustering.with_k(k))?;

    let members: Vec<Vec<usize>> = (0..clustering.k()).map(|c| clustering.members(c)).collect();
    let outcomes: Vec<Result<ClusterSummary, PipelineError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = members
            .iter()
            .enumerate()
            .map(|(cluster_index, idx)| {
                scope.spawn(move || summarize_cluster(group, cluster_index, idx, config, gateway))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("summarization thread panicked"))
            .collect()
    });
    let summaries = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;
    let text = aggregate_summaries(&summaries)?;

    Ok(KnowledgeDocument {
        product_id: group.product_id.clone(),
        method: Method::Crag,
        text,
        provenance: Provenance::Clusters(summaries),
        created_with: Fingerprint {
            k: Some(k),
            seed: Some(config.clustering.seed),
            embedder: Some(embedder_id.to_string()),
            backend: Some(gateway.backend_id()),
            digest: crag_digest(group, config, embedder_id, &gateway.backend_id()),
        },
    })
}

/// Digest of everything a CRAG build reads. The chosen k is left out: it is
/// a function of the config and the vectors, which the embedder id and the
/// review texts already pin down.
pub fn crag_digest(group: &ProductGroup, config: &CragConfig, embedder_id: &str, backend_id: &str) -> String {
    let settings = serde_json::to_string(&(config, embedder_id, backend_id))
        .expect("config serializes");
    digest_inputs(group, &settings)
}

fn summarize_cluster(
    group: &ProductGroup,
    cluster_index: usize,
    members: &[usize],
    config: &CragConfig,
    gateway: &Gateway,
) -> Result<ClusterSummary, PipelineError> {
    let wrap = |source| PipelineError::Summarization {
        product_id: group.product_id.clone(),
        cluster_index,
        source,
    };
    let reviews: Vec<&str> = members.iter().map(|&i| group.reviews[i].text.as_str()).collect();
    let request = summarization_request(&reviews, &config.oneshot, &gateway.model())
        .map_err(wrap)?;
    let response = gateway.complete(request).map_err(wrap)?;
    Ok(ClusterSummary {
        product_id: group.product_id.clone(),
        cluster_index,
        summary_text: response.text.trim().to_string(),
        source_review_count: members.len(),
        source_indexes: members.iter().map(|&i| group.reviews[i].source_index).collect(),
    })
}
