//! Uniform frame index sampling.

/// Picks `count` frame indices spread uniformly over a clip of `len` frames.
///
/// Endpoint-inclusive linear spacing: `index_i = round(i * (len-1) /
/// (count-1))` with round-half-up, so the first index is 0 and the last is
/// `len - 1` whenever both are at least 2. Returns `min(count, len)`
/// strictly increasing indices.
pub fn sample_uniform_frames(len: u64, count: usize) -> Vec<u64> {
    if len == 0 || count == 0 {
        return Vec::new();
    }
    let m = (count as u64).min(len);
    if m == 1 {
        return vec![0];
    }
    let span = (len - 1) as f64;
    let steps = (m - 1) as f64;
    (0..m)
        .map(|i| (i as f64 * span / steps).round() as u64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_when_count_equals_len() {
        assert_eq!(sample_uniform_frames(8, 8), vec![0, 1, 2, 3, 4, 5, 6, 7]);
    }

    #[test]
    fn symmetric_midpoint() {
        assert_eq!(sample_uniform_frames(9, 3), vec![0, 4, 8]);
    }

    #[test]
    fn eight_of_one_hundred() {
        // Frozen from the rounding rule evaluated by hand:
        // round(i * 99 / 7) for i in 0..8.
        assert_eq!(
            sample_uniform_frames(100, 8),
            vec![0, 14, 28, 42, 57, 71, 85, 99]
        );
    }

    #[test]
    fn clamps_to_len_when_oversampled() {
        assert_eq!(sample_uniform_frames(3, 10), vec![0, 1, 2]);
        assert_eq!(sample_uniform_frames(1, 10), vec![0]);
    }

    #[test]
    fn strictly_increasing_within_bounds() {
        for len in 2..80u64 {
            for count in 2..=len.min(16) as usize {
                let idx = sample_uniform_frames(len, count);
                assert_eq!(idx.first(), Some(&0));
                assert_eq!(idx.last(), Some(&(len - 1)));
                for pair in idx.windows(2) {
                    assert!(pair[0] < pair[1], "len={len} count={count}: {idx:?}");
                }
            }
        }
    }
}
