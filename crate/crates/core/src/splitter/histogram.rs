//! Histogram-based cut detection.
//!
//! Cuts are found by thresholding the temporal change of per-channel HSV
//! histograms between consecutive frames. The distance is the mean over the
//! three channels of half the L1 distance between normalized histograms:
//! bounded in [0, 1], zero iff the histograms match, and cheap enough to
//! run on every frame pair.

use crate::frame_io::{rgb_to_hsv, Frame, StreamHeader};

use super::{ShotBoundary, SplitterError};

/// Normalized per-channel histograms of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct HsvHistograms {
    pub hue: Vec<f64>,
    pub saturation: Vec<f64>,
    pub value: Vec<f64>,
}

impl HsvHistograms {
    pub fn bins(&self) -> usize {
        self.hue.len()
    }
}

fn bin_index(x: f64, range: f64, bins: usize) -> usize {
    ((x / range * bins as f64) as usize).min(bins - 1)
}

/// Computes hue/saturation/value histograms with `bins` buckets per channel,
/// each normalized to sum to 1.
pub fn hsv_histogram(frame: &Frame, header: &StreamHeader, bins: usize) -> HsvHistograms {
    assert!(bins >= 2, "need at least 2 bins per channel");
    let mut hue = vec![0u64; bins];
    let mut sat = vec![0u64; bins];
    let mut val = vec![0u64; bins];
    for y in 0..header.height {
        for x in 0..header.width {
            let (r, g, b) = frame.rgb_at(header, x, y);
            let (h, s, v) = rgb_to_hsv(r, g, b);
            hue[bin_index(h, 360.0, bins)] += 1;
            sat[bin_index(s, 1.0, bins)] += 1;
            val[bin_index(v, 1.0, bins)] += 1;
        }
    }
    let total = (header.width as u64 * header.height as u64) as f64;
    let normalize = |counts: Vec<u64>| counts.into_iter().map(|c| c as f64 / total).collect();
    HsvHistograms {
        hue: normalize(hue),
        saturation: normalize(sat),
        value: normalize(val),
    }
}

/// Mean over the three channels of half the L1 distance. Symmetric, in
/// `[0, 1]`, and 0 iff the histograms are identical.
pub fn hist_distance(a: &HsvHistograms, b: &HsvHistograms) -> Result<f64, SplitterError> {
    if a.bins() != b.bins() {
        return Err(SplitterError::BinMismatch(a.bins(), b.bins()));
    }
    let half_l1 = |x: &[f64], y: &[f64]| {
        0.5 * x
            .iter()
            .zip(y)
            .map(|(xa, xb)| (xa - xb).abs())
            .sum::<f64>()
    };
    Ok((half_l1(&a.hue, &b.hue)
        + half_l1(&a.saturation, &b.saturation)
        + half_l1(&a.value, &b.value))
        / 3.0)
}

/// Emits a boundary at frame `i` whenever the histogram distance between
/// frames `i-1` and `i` exceeds `threshold`, suppressing boundaries closer
/// than `min_scene_len` frames to the previous one. Confidence is the
/// distance clamped to `[0, 1]`.
pub fn detect_shots_histogram<I>(
    frames: I,
    header: &StreamHeader,
    threshold: f64,
    min_scene_len: u64,
    bins: usize,
) -> Vec<ShotBoundary>
where
    I: IntoIterator<Item = Frame>,
{
    assert!(threshold > 0.0 && threshold <= 1.0);
    assert!(min_scene_len >= 1);
    let mut boundaries = Vec::new();
    let mut prev: Option<HsvHistograms> = None;
    let mut last_boundary: Option<u64> = None;
    for frame in frames {
        let index = frame.pts_index;
        let hist = hsv_histogram(&frame, header, bins);
        if let Some(prev_hist) = &prev {
            // bins are equal by construction
            let distance = hist_distance(prev_hist, &hist).expect("bin counts fixed");
            let far_enough = last_boundary.map_or(true, |b| index - b >= min_scene_len);
            if distance > threshold && far_enough {
                boundaries.push(ShotBoundary {
                    frame_index: index,
                    confidence: distance.clamp(0.0, 1.0),
                });
                last_boundary = Some(index);
            }
        }
        prev = Some(hist);
    }
    boundaries
}
