//! Corpus-level score selection: the bottom-percentile cut and the
//! aesthetic threshold gate.

use std::collections::BTreeSet;

/// Result of a percentile cut over a scored corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct PercentileCut {
    /// Score of the highest removed item, or `-inf` when nothing was removed.
    pub threshold: f64,
    pub removed: BTreeSet<String>,
}

/// Removes exactly `floor(fraction * N)` of the lowest-scoring clips.
///
/// Ordering is by `(score, clip_id)` so ties resolve deterministically to
/// the lexicographically smallest ids. This is a corpus barrier: it needs
/// every score before it can run.
pub fn percentile_cut(scored: &[(String, f64)], fraction: f64) -> PercentileCut {
    assert!(
        (0.0..1.0).contains(&fraction),
        "fraction must be in [0, 1)"
    );
    let mut order: Vec<&(String, f64)> = scored.iter().collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let cut = (fraction * scored.len() as f64).floor() as usize;
    let removed: BTreeSet<String> = order[..cut].iter().map(|(id, _)| id.clone()).collect();
    let threshold = if cut > 0 {
        order[cut - 1].1
    } else {
        f64::NEG_INFINITY
    };
    PercentileCut { threshold, removed }
}

/// Appearance-quality gate: pass iff `score >= threshold` (inclusive).
pub fn aesthetic_gate(score: f64, threshold: f64) -> bool {
    score >= threshold
}
