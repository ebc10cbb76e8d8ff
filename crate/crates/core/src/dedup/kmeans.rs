//! Lloyd's k-means with k-means++ seeding.
//!
//! Deterministic given (inputs, k, seed): seeding draws from a seeded
//! ChaCha stream, assignment ties break to the lowest centroid index, and
//! centroid updates are sequential reductions in input order.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DedupError, Embedding};

/// Fitted clustering model.
#[derive(Debug, Clone)]
pub struct KMeansModel {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: BTreeMap<String, u32>,
    pub inertia: f64,
    pub seed: u64,
    pub iterations: u32,
    /// Inertia recorded after each assignment step; non-increasing.
    pub inertia_per_iter: Vec<f64>,
}

fn squared_distance(point: &[f32], centroid: &[f64]) -> f64 {
    point
        .iter()
        .zip(centroid)
        .map(|(&p, &c)| {
            let d = f64::from(p) - c;
            d * d
        })
        .sum()
}

fn nearest(point: &[f32], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = 0usize;
    let mut best_distance = f64::INFINITY;
    for (j, centroid) in centroids.iter().enumerate() {
        let distance = squared_distance(point, centroid);
        if distance < best_distance {
            best_distance = distance;
            best = j;
        }
    }
    (best, best_distance)
}

/// Fits k-means to the embeddings.
///
/// Runs Lloyd iterations from a k-means++ seeding until the assignment
/// reaches a fixpoint or `max_iters` passes. Empty clusters keep their
/// previous centroid.
pub fn kmeans_fit(
    embeddings: &[Embedding],
    k: usize,
    max_iters: u32,
    seed: u64,
) -> Result<KMeansModel, DedupError> {
    let n = embeddings.len();
    if n == 0 {
        return Err(DedupError::EmptyInput);
    }
    if k == 0 || k > n {
        return Err(DedupError::KTooLarge { k, n });
    }
    let dim = embeddings[0].vector.len();
    for e in embeddings {
        if e.vector.len() != dim {
            return Err(DedupError::DimensionMismatch(format!(
                "{} has dim {}, expected {dim}",
                e.clip_id,
                e.vector.len()
            )));
        }
    }

    let points: Vec<&[f32]> = embeddings.iter().map(|e| e.vector.as_slice()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding: first centroid uniform, the rest drawn with
    // probability proportional to squared distance from the chosen set.
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = rng.gen_range(0..n);
    centroids.push(points[first].iter().map(|&x| f64::from(x)).collect());
    let mut nearest_sq: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = nearest_sq.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in nearest_sq.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        let centroid: Vec<f64> = points[pick].iter().map(|&x| f64::from(x)).collect();
        for (i, p) in points.iter().enumerate() {
            let d = squared_distance(p, &centroid);
            if d < nearest_sq[i] {
                nearest_sq[i] = d;
            }
        }
        centroids.push(centroid);
    }

    let mut assignments = vec![0usize; n];
    let mut inertia = f64::INFINITY;
    let mut inertia_per_iter = Vec::new();
    let mut iterations = 0u32;

    for _ in 0..max_iters {
        iterations += 1;

        let mut changed = false;
        let mut step_inertia = 0.0;
        for (i, point) in points.iter().enumerate() {
            let (j, distance) = nearest(point, &centroids);
            step_inertia += distance;
            if assignments[i] != j {
                assignments[i] = j;
                changed = true;
            }
        }
        debug_assert!(
            step_inertia <= inertia + 1e-9,
            "inertia increased: {inertia} -> {step_inertia}"
        );
        inertia = step_inertia;
        inertia_per_iter.push(step_inertia);

        if !changed && iterations > 1 {
            break;
        }

        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0u64; k];
        for (i, point) in points.iter().enumerate() {
            let j = assignments[i];
            counts[j] += 1;
            for (s, &x) in sums[j].iter_mut().zip(point.iter()) {
                *s += f64::from(x);
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                for (c, s) in centroids[j].iter_mut().zip(&sums[j]) {
                    *c = s / counts[j] as f64;
                }
            }
        }
    }

    let assignments: BTreeMap<String, u32> = embeddings
        .iter()
        .zip(&assignments)
        .map(|(e, &j)| (e.clip_id.clone(), j as u32))
        .collect();

    Ok(KMeansModel {
        centroids,
        assignments,
        inertia,
        seed,
        iterations,
        inertia_per_iter,
    })
}
