use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{check_dimensions, squared_distance, ClusteringConfig, ClusteringError, ClusteringResult};
use crate::embedding::EmbeddingVector;
use crate::scalar::Scalar;

struct RestartOutcome<T> {
    centroids: Vec<Vec<T>>,
    assignments: Vec<usize>,
    trace: Vec<T>,
    iterations: usize,
    converged: bool,
}

/// Lloyd's algorithm with seeded k-means++ initialization and `restarts`
/// independent runs; the lowest-inertia run wins, earlier restart on ties.
///
/// Restart `r` draws from `seed + r`, so the result is a pure function of the
/// inputs regardless of how restarts are scheduled. `k` is clamped to the
/// number of vectors.
pub fn kmeans<T: Scalar>(
    vectors: &[EmbeddingVector<T>],
    config: &ClusteringConfig,
) -> Result<ClusteringResult<T>, ClusteringError> {
    config.validate()?;
    check_dimensions(vectors)?;
    let points: Vec<&[T]> = vectors.iter().map(EmbeddingVector::values).collect();
    let k = config.k.min(points.len());

    let outcomes: Vec<RestartOutcome<T>> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let seed = config.seed.wrapping_add(r as u64);
            run_restart(&points, k, config.max_iterations, seed)
        })
        .collect();

    let mut best = 0;
    for (i, o) in outcomes.iter().enumerate() {
        if final_inertia(o) < final_inertia(&outcomes[best]) {
            best = i;
        }
    }
    let inertia_traces: Vec<Vec<T>> = outcomes.iter().map(|o| o.trace.clone()).collect();
    let winner = outcomes.into_iter().nth(best).expect("restarts >= 1");
    let inertia = final_inertia(&winner);
    let centroids = winner
        .centroids
        .into_iter()
        .map(|c| EmbeddingVector::new(c).expect("means of finite points are finite"))
        .collect();
    Ok(ClusteringResult {
        centroids,
        assignments: winner.assignments,
        inertia,
        iterations_run: winner.iterations,
        converged: winner.converged,
        restart: best,
        inertia_traces,
    })
}

fn final_inertia<T: Scalar>(o: &RestartOutcome<T>) -> T {
    *o.trace.last().expect("at least one update step")
}

fn run_restart<T: Scalar>(
    points: &[&[T]],
    k: usize,
    max_iterations: usize,
    seed: u64,
) -> RestartOutcome<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(points, k, &mut rng);
    let mut assignments: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    let mut converged = false;

    for _ in 0..max_iterations {
        let next = assign_nearest(points, &centroids);
        if next == assignments {
            converged = true;
            break;
        }
        assignments = next;
        repair_empty_clusters(points, &mut centroids, &mut assignments);
        centroids = cluster_means(points, &assignments, k);
        trace.push(total_inertia(points, &centroids, &assignments));
    }
    if !converged && assign_nearest(points, &centroids) == assignments {
        converged = true;
    }
    RestartOutcome {
        centroids,
        assignments,
        iterations: trace.len(),
        trace,
        converged,
    }
}

fn kmeans_plus_plus<T: Scalar>(points: &[&[T]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<T>> {
    let n = points.len();
    let mut centroids: Vec<Vec<T>> = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..n)].to_vec());
    let mut nearest: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centroids[0]).to_f64_lossy())
        .collect();

    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &d) in nearest.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            // rounding can leave `target` just past the final sum
            chosen.unwrap_or_else(|| nearest.iter().rposition(|&d| d > 0.0).expect("total > 0"))
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick].to_vec();
        for (d, p) in nearest.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, &c).to_f64_lossy());
        }
        centroids.push(c);
    }
    centroids
}

/// Nearest centroid per point; ties go to the lower cluster index.
fn assign_nearest<T: Scalar>(points: &[&[T]], centroids: &[Vec<T>]) -> Vec<usize> {
    points
        .iter()
        .map(|p| {
            let mut best = 0;
            let mut best_d = squared_distance(p, &centroids[0]);
            for (c, centroid) in centroids.iter().enumerate().skip(1) {
                let d = squared_distance(p, centroid);
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            best
        })
        .collect()
}

/// Gives every empty cluster the point farthest from its own centroid, taken
/// from clusters that can spare one. Requires `points.len() >= k`.
fn repair_empty_clusters<T: Scalar>(
    points: &[&[T]],
    centroids: &mut [Vec<T>],
    assignments: &mut [usize],
) {
    let k = centroids.len();
    let mut sizes = vec![0usize; k];
    for &a in assignments.iter() {
        sizes[a] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let mut donor: Option<(usize, T)> = None;
        for (i, p) in points.iter().enumerate() {
            let owner = assignments[i];
            if sizes[owner] < 2 {
                continue;
            }
            let d = squared_distance(p, &centroids[owner]);
            if donor.is_none_or(|(_, best)| d > best) {
                donor = Some((i, d));
            }
        }
        let (i, _) = donor.expect("n >= k leaves a cluster with two or more points");
        sizes[assignments[i]] -= 1;
        assignments[i] = empty;
        sizes[empty] = 1;
        centroids[empty] = points[i].to_vec();
    }
}

fn cluster_means<T: Scalar>(points: &[&[T]], assignments: &[usize], k: usize) -> Vec<Vec<T>> {
    let dim = points[0].len();
    let mut sums = vec![vec![T::zero(); dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, &x) in sums[a].iter_mut().zip(p.iter()) {
            *s = *s + x;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        let n = T::from_usize_lossy(n.max(1));
        s.iter_mut().for_each(|x| *x = *x / n);
    }
    sums
}

fn total_inertia<T: Scalar>(points: &[&[T]], centroids: &[Vec<T>], assignments: &[usize]) -> T {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| squared_distance(p, &centroids[a]))
        .sum()
}
