//! Blocked pairwise duplicate detection within one cluster.
//!
//! Streams `block x block` tiles of the upper-triangular cosine similarity
//! matrix so the full N x N matrix is never materialized. Qualifying pairs
//! (similarity at least `1 - eps`) are grouped transitively with
//! union-find; each group keeps the member with the most pixels.

use std::collections::BTreeSet;

use super::DedupError;

/// One clip entering duplicate detection: its unit-norm embedding plus the
/// pixel count used to pick group representatives.
#[derive(Debug, Clone)]
pub struct DedupItem {
    pub clip_id: String,
    pub vector: Vec<f32>,
    /// width * height of the clip, for representative selection.
    pub pixels: u64,
}

/// A connected component of near-duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct DuplicateGroup {
    pub representative: String,
    pub members: BTreeSet<String>,
    pub max_similarity: f64,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

/// Finds duplicate groups among `items` at cosine-distance threshold `eps`.
///
/// All vectors must be unit-norm (within 1e-6). `block` is the tile edge
/// for the upper-triangle sweep; results are independent of it.
pub fn find_duplicates_blocked(
    items: &[DedupItem],
    eps: f64,
    block: usize,
) -> Result<Vec<DuplicateGroup>, DedupError> {
    assert!(eps > 0.0 && eps < 1.0, "eps must be in (0, 1)");
    assert!(block >= 1);
    for item in items {
        let norm: f64 = dot(&item.vector, &item.vector).sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(DedupError::UnnormalizedInput(item.clip_id.clone()));
        }
    }

    let n = items.len();
    let threshold = 1.0 - eps;
    let mut uf = UnionFind::new(n);
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();

    let tiles = n.div_ceil(block);
    for ti in 0..tiles {
        let i_range = ti * block..((ti + 1) * block).min(n);
        for tj in ti..tiles {
            let j_start = tj * block;
            let j_end = ((tj + 1) * block).min(n);
            for i in i_range.clone() {
                // Upper triangle only: on the diagonal tile start past i.
                let lo = if ti == tj { (i + 1).max(j_start) } else { j_start };
                for j in lo..j_end {
                    let sim = dot(&items[i].vector, &items[j].vector);
                    if sim >= threshold {
                        edges.push((i, j, sim));
                    }
                }
            }
        }
    }

    for &(i, j, _) in &edges {
        uf.union(i, j);
    }

    // Gather components of size >= 2.
    let mut component_max_sim: Vec<f64> = vec![f64::NEG_INFINITY; n];
    for &(i, j, sim) in &edges {
        let root = uf.find(i);
        let _ = j;
        if sim > component_max_sim[root] {
            component_max_sim[root] = sim;
        }
    }
    let mut members_by_root: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let root = uf.find(i);
        members_by_root[root].push(i);
    }

    let mut groups = Vec::new();
    for (root, member_ids) in members_by_root.iter().enumerate() {
        if member_ids.len() < 2 {
            continue;
        }
        let representative = member_ids
            .iter()
            .map(|&i| &items[i])
            .max_by(|a, b| {
                a.pixels
                    .cmp(&b.pixels)
                    .then_with(|| b.clip_id.cmp(&a.clip_id))
            })
            .expect("nonempty group")
            .clip_id
            .clone();
        groups.push(DuplicateGroup {
            representative,
            members: member_ids.iter().map(|&i| items[i].clip_id.clone()).collect(),
            max_similarity: component_max_sim[root],
        });
    }
    groups.sort_by(|a, b| a.representative.cmp(&b.representative));
    Ok(groups)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(clip_id: &str, vector: Vec<f32>, pixels: u64) -> DedupItem {
        DedupItem {
            clip_id: clip_id.to_string(),
            vector,
            pixels,
        }
    }

    #[test]
    fn identical_vectors_form_one_group_with_resolution_winner() {
        let v = vec![0.6f32, 0.8];
        let items = vec![
            item("low", v.clone(), 640 * 480),
            item("high", v.clone(), 1920 * 1080),
            item("mid", v, 1280 * 720),
        ];
        let groups = find_duplicates_blocked(&items, 0.05, 256).unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].representative, "high");
        assert_eq!(groups[0].members.len(), 3);
        assert!((groups[0].max_similarity - 1.0).abs() < 1e-6);
    }

    #[test]
    fn orthogonal_vectors_form_no_groups() {
        let items = vec![
            item("a", vec![1.0, 0.0, 0.0], 1),
            item("b", vec![0.0, 1.0, 0.0], 1),
            item("c", vec![0.0, 0.0, 1.0], 1),
        ];
        assert!(find_duplicates_blocked(&items, 0.5, 2).unwrap().is_empty());
    }

    #[test]
    fn representative_ties_break_on_clip_id() {
        let v = vec![1.0f32, 0.0];
        let items = vec![item("zeta", v.clone(), 100), item("alpha", v, 100)];
        let groups = find_duplicates_blocked(&items, 0.05, 256).unwrap();
        assert_eq!(groups[0].representative, "alpha");
    }

    #[test]
    fn unnormalized_input_rejected() {
        let items = vec![item("a", vec![2.0, 0.0], 1)];
        assert!(matches!(
            find_duplicates_blocked(&items, 0.05, 256),
            Err(DedupError::UnnormalizedInput(id)) if id == "a"
        ));
    }

    #[test]
    fn transitive_chains_merge_into_one_group() {
        // a~b and b~c but a!~c: one group of three.
        let theta = 0.25f32; // cos(0.25) ~ 0.969 pairwise, cos(0.5) ~ 0.878
        let mk = |angle: f32| vec![angle.cos(), angle.sin()];
        let items = vec![
            item("a", mk(0.0), 3),
            item("b", mk(theta), 2),
            item("c", mk(2.0 * theta), 1),
        ];
        let eps = 0.05; // threshold 0.95: pairs at 0.969 qualify, 0.878 does not
        let groups = find_duplicates_blocked(&items, eps, 256).unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].members.len(), 3);
        assert_eq!(groups[0].representative, "a");
    }

    #[test]
    fn block_size_does_not_change_results() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut items = Vec::new();
        for i in 0..130 {
            let mut v: Vec<f32> = (0..8).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
            let norm = (v.iter().map(|x| x * x).sum::<f32>()).sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            items.push(item(&format!("c{i:03}"), v, i));
        }
        // Plant a few exact duplicates.
        for i in 0..5 {
            let mut dup = items[i * 7].clone();
            dup.clip_id = format!("dup{i}");
            dup.pixels = 0;
            items.push(dup);
        }
        let a = find_duplicates_blocked(&items, 0.05, 256).unwrap();
        let b = find_duplicates_blocked(&items, 0.05, 3).unwrap();
        let c = find_duplicates_blocked(&items, 0.05, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(a.len(), 5);
    }
}
