//! Cluster-shortlist vector search.
//!
//! The index is a coarse quantizer: items live in the k-means cluster they
//! were assigned to. A query ranks the `n_probe` nearest centroids, then
//! ranks the members of those clusters exactly by cosine similarity. With
//! `n_probe = k` the result equals brute-force ranking.

use serde::{Deserialize, Serialize};

use super::{DedupError, KMeansModel};

/// A searchable snapshot of the clustered corpus: centroids plus every
/// item's cluster assignment and vector.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    pub dim: usize,
    pub centroids: Vec<Vec<f32>>,
    /// `(clip_id, cluster, unit vector)` per indexed clip.
    pub items: Vec<(String, u32, Vec<f32>)>,
    pub seed: u64,
    pub inertia: f64,
    pub iterations: u32,
}

impl VectorIndex {
    /// Builds an index from a fitted model and the embedded corpus.
    pub fn build(
        model: &KMeansModel,
        embeddings: &[super::Embedding],
    ) -> Result<Self, DedupError> {
        let dim = embeddings
            .first()
            .map(|e| e.vector.len())
            .ok_or(DedupError::EmptyInput)?;
        let mut items = Vec::with_capacity(embeddings.len());
        for e in embeddings {
            if e.vector.len() != dim {
                return Err(DedupError::DimensionMismatch(format!(
                    "{} has dim {}",
                    e.clip_id,
                    e.vector.len()
                )));
            }
            let cluster = *model
                .assignments
                .get(&e.clip_id)
                .ok_or_else(|| DedupError::MissingEmbedding(e.clip_id.clone()))?;
            items.push((e.clip_id.clone(), cluster, e.vector.clone()));
        }
        items.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(Self {
            dim,
            centroids: model
                .centroids
                .iter()
                .map(|c| c.iter().map(|&x| x as f32).collect())
                .collect(),
            items,
            seed: model.seed,
            inertia: model.inertia,
            iterations: model.iterations,
        })
    }

    pub fn vector_of(&self, clip_id: &str) -> Option<&[f32]> {
        self.items
            .binary_search_by(|(id, _, _)| id.as_str().cmp(clip_id))
            .ok()
            .map(|i| self.items[i].2.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub clip_id: String,
    pub similarity: f64,
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

/// Ranks the corpus against `query`.
///
/// Shortlists the members of the `n_probe` centroids nearest the query (by
/// squared euclidean distance, ties to the lower cluster index), then ranks
/// the shortlist by exact cosine similarity, descending, ties by clip id.
pub fn search(
    query: &[f32],
    index: &VectorIndex,
    top_k: usize,
    n_probe: usize,
) -> Result<Vec<SearchHit>, DedupError> {
    if query.len() != index.dim {
        return Err(DedupError::DimensionMismatch(format!(
            "query dim {} != index dim {}",
            query.len(),
            index.dim
        )));
    }
    let k = index.centroids.len();
    let n_probe = n_probe.clamp(1, k.max(1));
    let query_norm = dot(query, query).sqrt();
    if query_norm <= 0.0 || !query_norm.is_finite() {
        return Err(DedupError::DimensionMismatch("zero-norm query".into()));
    }

    let mut centroid_order: Vec<(f64, u32)> = index
        .centroids
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let d2: f64 = query
                .iter()
                .zip(c)
                .map(|(&q, &x)| {
                    let d = f64::from(q) - f64::from(x);
                    d * d
                })
                .sum();
            (d2, j as u32)
        })
        .collect();
    centroid_order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let probed: Vec<u32> = centroid_order
        .into_iter()
        .take(n_probe)
        .map(|(_, j)| j)
        .collect();

    let mut hits: Vec<SearchHit> = index
        .items
        .iter()
        .filter(|(_, cluster, _)| probed.contains(cluster))
        .map(|(clip_id, _, vector)| {
            let item_norm = dot(vector, vector).sqrt();
            let similarity = if item_norm > 0.0 {
                dot(query, vector) / (query_norm * item_norm)
            } else {
                0.0
            };
            SearchHit {
                clip_id: clip_id.clone(),
                similarity,
            }
        })
        .collect();
    hits.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then_with(|| a.clip_id.cmp(&b.clip_id))
    });
    hits.truncate(top_k);
    Ok(hits)
}
