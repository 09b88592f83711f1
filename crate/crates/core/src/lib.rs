//! Clustered retrieval-augmented generation (CRAG).
//!
//! A product's reviews are embedded, grouped with K-means, each group is
//! summarized by a language model, and the summaries are merged into a
//! compact knowledge document. The plain RAG baseline, which hands every
//! review to the model, is built alongside for comparison, and the
//! [`evaluation`] module measures prompt tokens and answer similarity
//! between the two.
//!
//! The numeric core ([`clustering`], [`embedding::EmbeddingVector`],
//! [`evaluation::cosine_similarity`]) is generic over [`Scalar`]; the aliases
//! below fix it to `f64`, which is what the pipeline uses.

pub mod clustering;
pub mod embedding;
pub mod evaluation;
pub mod fsutil;
pub mod ingest;
pub mod llm_gateway;
pub mod pipeline;
pub mod retry;
mod scalar;

pub use scalar::Scalar;

pub type Embedding = embedding::EmbeddingVector<f64>;
pub type Embedding32 = embedding::EmbeddingVector<f32>;
pub type Clustering = clustering::ClusteringResult<f64>;
pub type Clustering32 = clustering::ClusteringResult<f32>;
