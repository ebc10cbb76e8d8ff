//! Semantic deduplication and the cluster-shortlist search engine.
//!
//! Embeddings are clustered with k-means; duplicates are detected within
//! each cluster by streaming blocked pairwise cosine similarity over the
//! upper triangle, grouping qualifying pairs with union-find and keeping
//! the highest-resolution member of each group.

mod blocked;
mod embed;
mod index_file;
mod kmeans;
mod search;

pub use blocked::{find_duplicates_blocked, DedupItem, DuplicateGroup};
pub use embed::{embed_corpus, stub_embedding, EmbedOutcome, Embedder, HttpEmbedder, StubEmbedder};
pub use index_file::{load_index, save_index};
pub use kmeans::{kmeans_fit, KMeansModel};
pub use search::{search, SearchHit, VectorIndex};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default cosine-distance threshold: vectors within `eps` of each other
/// count as duplicates.
pub const DEFAULT_EPS: f64 = 0.05;
/// Default tile edge for blocked pairwise similarity.
pub const DEFAULT_BLOCK: usize = 256;

#[derive(Debug, Error)]
pub enum DedupError {
    #[error("k={k} exceeds {n} points")]
    KTooLarge { k: usize, n: usize },
    #[error("no embeddings given")]
    EmptyInput,
    #[error("embedding for {0} is not unit-norm")]
    UnnormalizedInput(String),
    #[error("missing embedding or cluster assignment for {0}")]
    MissingEmbedding(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("index file corrupt: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A clip embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub clip_id: String,
    pub vector: Vec<f32>,
    pub normalized: bool,
}

impl Embedding {
    pub fn norm(&self) -> f64 {
        self.vector
            .iter()
            .map(|&x| f64::from(x) * f64::from(x))
            .sum::<f64>()
            .sqrt()
    }
}

/// Result of deduplicating a corpus.
#[derive(Debug, Clone)]
pub struct DedupOutcome {
    pub kept: BTreeSet<String>,
    pub removed: BTreeSet<String>,
    pub removal_fraction: f64,
    pub groups: Vec<DuplicateGroup>,
}

/// Deduplicates `items` within the clusters of `model`.
///
/// Every item must carry an embedding and appear in the model's
/// assignments. Non-representative members of every duplicate group are
/// removed; `kept` and `removed` partition the input ids.
pub fn dedup(
    items: &[DedupItem],
    model: &KMeansModel,
    eps: f64,
    block: usize,
) -> Result<DedupOutcome, DedupError> {
    let mut clusters: Vec<Vec<DedupItem>> = vec![Vec::new(); model.centroids.len()];
    for item in items {
        if item.vector.is_empty() {
            return Err(DedupError::MissingEmbedding(item.clip_id.clone()));
        }
        let cluster = *model
            .assignments
            .get(&item.clip_id)
            .ok_or_else(|| DedupError::MissingEmbedding(item.clip_id.clone()))?;
        clusters[cluster as usize].push(item.clone());
    }

    let mut groups = Vec::new();
    let mut removed = BTreeSet::new();
    for members in &clusters {
        if members.len() < 2 {
            continue;
        }
        for group in find_duplicates_blocked(members, eps, block)? {
            for member in &group.members {
                if member != &group.representative {
                    removed.insert(member.clone());
                }
            }
            groups.push(group);
        }
    }
    groups.sort_by(|a, b| a.representative.cmp(&b.representative));

    let kept: BTreeSet<String> = items
        .iter()
        .map(|i| i.clip_id.clone())
        .filter(|id| !removed.contains(id))
        .collect();
    let removal_fraction = if items.is_empty() {
        0.0
    } else {
        removed.len() as f64 / items.len() as f64
    };
    Ok(DedupOutcome {
        kept,
        removed,
        removal_fraction,
        groups,
    })
}
