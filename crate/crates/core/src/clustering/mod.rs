//! Seeded K-means over embedding vectors, inertia, and elbow-method
//! selection of the cluster count.

mod elbow;
mod kmeans;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingVector;
use crate::scalar::Scalar;

pub use elbow::{choose_elbow, elbow_select_k, ElbowCurve, ElbowPoint};
pub use kmeans::kmeans;

#[derive(Debug, Error, PartialEq)]
pub enum ClusteringError {
    #[error("cannot cluster an empty set of vectors")]
    EmptyInput,
    #[error("vector {index} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("assignment {index} points at cluster {cluster}, but there are {k} centroids")]
    AssignmentOutOfRange { index: usize, cluster: usize, k: usize },
    #[error("invalid clustering configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusteringConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iterations: usize,
    pub restarts: usize,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            k: 4,
            seed: 0,
            max_iterations: 300,
            restarts: 10,
        }
    }
}

impl ClusteringConfig {
    pub fn with_k(self, k: usize) -> Self {
        Self { k, ..self }
    }

    pub fn validate(&self) -> Result<(), ClusteringError> {
        if self.k == 0 {
            return Err(ClusteringError::InvalidConfig("k must be at least 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(ClusteringError::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        if self.restarts == 0 {
            return Err(ClusteringError::InvalidConfig("restarts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult<T: Scalar = f64> {
    pub centroids: Vec<EmbeddingVector<T>>,
    pub assignments: Vec<usize>,
    pub inertia: T,
    pub iterations_run: usize,
    pub converged: bool,
    /// Index of the restart that produced this result.
    pub restart: usize,
    /// Inertia after every update step, one trace per restart.
    pub inertia_traces: Vec<Vec<T>>,
}

impl<T: Scalar> ClusteringResult<T> {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    /// Input indexes assigned to `cluster`, ascending.
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == cluster)
            .map(|(i, _)| i)
            .collect()
    }
}

pub(crate) fn squared_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

pub(crate) fn check_dimensions<T: Scalar>(
    vectors: &[EmbeddingVector<T>],
) -> Result<usize, ClusteringError> {
    let first = vectors.first().ok_or(ClusteringError::EmptyInput)?;
    let expected = first.dimension();
    for (index, v) in vectors.iter().enumerate() {
        if v.dimension() != expected {
            return Err(ClusteringError::DimensionMismatch {
                index,
                expected,
                found: v.dimension(),
            });
        }
    }
    Ok(expected)
}

/// Sum of squared distances from each vector to its assigned centroid.
pub fn inertia<T: Scalar>(
    vectors: &[EmbeddingVector<T>],
    centroids: &[EmbeddingVector<T>],
    assignments: &[usize],
) -> Result<T, ClusteringError> {
    if assignments.len() != vectors.len() {
        return Err(ClusteringError::InvalidConfig(format!(
            "{} assignments for {} vectors",
            assignments.len(),
            vectors.len()
        )));
    }
    let mut total = T::zero();
    for (index, (v, &cluster)) in vectors.iter().zip(assignments).enumerate() {
        let c = centroids
            .get(cluster)
            .ok_or(ClusteringError::AssignmentOutOfRange {
                index,
                cluster,
                k: centroids.len(),
            })?;
        if c.dimension() != v.dimension() {
            return Err(ClusteringError::DimensionMismatch {
                index,
                expected: c.dimension(),
                found: v.dimension(),
            });
        }
        total = total + squared_distance(v.values(), c.values());
    }
    Ok(total)
}
