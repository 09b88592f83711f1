use std::fmt::Write;

use super::{kmeans, ClusteringConfig, ClusteringError};
use crate::embedding::EmbeddingVector;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct ElbowPoint<T> {
    pub k: usize,
    pub inertia: T,
    /// `(I(k-1) - I(k)) - (I(k) - I(k+1))`; absent at the curve ends.
    pub second_difference: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElbowCurve<T> {
    pub points: Vec<ElbowPoint<T>>,
    pub chosen_k: usize,
}

impl<T: Scalar> ElbowCurve<T> {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,inertia,second_difference,chosen\n");
        for p in &self.points {
            let d = p.second_difference.map(|d| d.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", p.k, p.inertia, d, p.k == self.chosen_k);
        }
        out
    }
}

/// Picks the interior k with the largest discrete second difference of the
/// inertia curve. Ties keep the smaller k.
pub fn choose_elbow<T: Scalar>(k_min: usize, inertias: &[T]) -> Result<ElbowCurve<T>, ClusteringError> {
    if inertias.len() < 3 {
        return Err(ClusteringError::InvalidConfig(format!(
            "elbow selection needs at least 3 candidates, got {}",
            inertias.len()
        )));
    }
    let last = inertias.len() - 1;
    let mut points = Vec::with_capacity(inertias.len());
    let mut best: Option<(usize, T)> = None;
    for (i, &inertia) in inertias.iter().enumerate() {
        let second_difference = (i > 0 && i < last).then(|| {
            (inertias[i - 1] - inertia) - (inertia - inertias[i + 1])
        });
        if let Some(d) = second_difference {
            if best.is_none_or(|(_, b)| d > b) {
                best = Some((k_min + i, d));
            }
        }
        points.push(ElbowPoint {
            k: k_min + i,
            inertia,
            second_difference,
        });
    }
    Ok(ElbowCurve {
        points,
        chosen_k: best.expect("three or more candidates have an interior").0,
    })
}

/// Runs k-means for every k in `k_min..=k_max` (upper end clamped to the
/// number of vectors) and picks the elbow.
pub fn elbow_select_k<T: Scalar>(
    vectors: &[EmbeddingVector<T>],
    k_min: usize,
    k_max: usize,
    config: &ClusteringConfig,
) -> Result<ElbowCurve<T>, ClusteringError> {
    if vectors.is_empty() {
        return Err(ClusteringError::EmptyInput);
    }
    let k_min = k_min.max(1);
    let k_max = k_max.min(vectors.len());
    if k_max < k_min + 2 {
        return Err(ClusteringError::InvalidConfig(format!(
            "elbow selection needs at least 3 candidates, range is {k_min}..={k_max}"
        )));
    }
    let inertias = (k_min..=k_max)
        .map(|k| kmeans(vectors, &config.with_k(k)).map(|r| r.inertia))
        .collect::<Result<Vec<_>, _>>()?;
    choose_elbow(k_min, &inertias)
}
