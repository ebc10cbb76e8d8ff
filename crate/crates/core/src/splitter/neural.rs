//! Neural boundary detector client.
//!
//! The detector service consumes a rolling window of 100 downscaled frames
//! (48x27 RGB, row-major bytes) and returns one transition probability per
//! frame. The local pipeline slides windows over the stream, thresholds the
//! probabilities, and merges duplicate detections from overlapping windows.

use crate::client::ClientError;
use crate::frame_io::{resize_rgb_nearest, Frame, StreamHeader};

use super::{ShotBoundary, SplitterError};

pub const DETECTOR_WINDOW: usize = 100;
pub const DETECTOR_FRAME_WIDTH: u32 = 48;
pub const DETECTOR_FRAME_HEIGHT: u32 = 27;

/// Transition-probability service over a 100-frame window.
pub trait BoundaryDetector {
    /// `frames` holds exactly [`DETECTOR_WINDOW`] payloads of
    /// 48*27*3 bytes. Returns one probability in `[0, 1]` per frame.
    fn probe(&self, frames: &[Vec<u8>]) -> Result<Vec<f64>, ClientError>;
}

/// Stub detector returning all zeros: no boundaries anywhere.
#[derive(Debug, Default)]
pub struct StubBoundaryDetector;

impl BoundaryDetector for StubBoundaryDetector {
    fn probe(&self, frames: &[Vec<u8>]) -> Result<Vec<f64>, ClientError> {
        Ok(vec![0.0; frames.len()])
    }
}

#[derive(Debug, Clone)]
pub struct NeuralDetectorConfig {
    /// Probability threshold for accepting a peak as a boundary.
    pub threshold: f64,
    /// Window stride in frames.
    pub stride: usize,
    /// Detections within this many frames are merged, keeping the one with
    /// higher confidence.
    pub merge_window: u64,
}

impl Default for NeuralDetectorConfig {
    fn default() -> Self {
        Self {
            threshold: 0.4,
            stride: 50,
            merge_window: 2,
        }
    }
}

/// Downscales one frame to the detector's input payload.
pub fn downscale_for_detector(frame: &Frame, header: &StreamHeader) -> Vec<u8> {
    let rgb = frame.to_rgb(header);
    resize_rgb_nearest(
        &rgb,
        header.width,
        header.height,
        DETECTOR_FRAME_WIDTH,
        DETECTOR_FRAME_HEIGHT,
    )
}

/// Sends one window to the detector, padding a short tail by repeating its
/// last frame up to the full window length.
pub fn neural_boundary_probe(
    window: &[Vec<u8>],
    client: &dyn BoundaryDetector,
) -> Result<Vec<f64>, SplitterError> {
    assert!(!window.is_empty(), "window must contain at least one frame");
    let mut padded: Vec<Vec<u8>>;
    let frames: &[Vec<u8>] = if window.len() == DETECTOR_WINDOW {
        window
    } else {
        padded = window.to_vec();
        let last = padded.last().expect("nonempty").clone();
        padded.resize(DETECTOR_WINDOW, last);
        &padded
    };
    let probs = client.probe(frames)?;
    if probs.len() != DETECTOR_WINDOW {
        return Err(ClientError::Malformed(format!(
            "expected {DETECTOR_WINDOW} probabilities, got {}",
            probs.len()
        ))
        .into());
    }
    if probs.iter().any(|p| !(0.0..=1.0).contains(p) || !p.is_finite()) {
        return Err(ClientError::Malformed("probability out of [0,1]".into()).into());
    }
    Ok(probs)
}

/// Runs the detector over a whole stream with overlapping windows and
/// converts probability peaks into merged boundaries.
pub fn detect_shots_neural(
    frames: &[Frame],
    header: &StreamHeader,
    client: &dyn BoundaryDetector,
    config: &NeuralDetectorConfig,
) -> Result<Vec<ShotBoundary>, SplitterError> {
    if frames.is_empty() {
        return Ok(Vec::new());
    }
    let small: Vec<Vec<u8>> = frames
        .iter()
        .map(|f| downscale_for_detector(f, header))
        .collect();

    let mut candidates: Vec<ShotBoundary> = Vec::new();
    let mut start = 0usize;
    loop {
        let end = (start + DETECTOR_WINDOW).min(small.len());
        let probs = neural_boundary_probe(&small[start..end], client)?;
        let valid = end - start;
        for (pos, &p) in probs.iter().enumerate().take(valid) {
            let global = (start + pos) as u64;
            if global == 0 || p <= config.threshold {
                continue;
            }
            // Peak rule: not rising into the next sample, not falling from
            // the previous one. Plateaus resolve to their last index.
            let rising_next = pos + 1 < valid && probs[pos + 1] >= p;
            let below_prev = pos > 0 && probs[pos - 1] > p;
            if !rising_next && !below_prev {
                candidates.push(ShotBoundary {
                    frame_index: global,
                    confidence: p,
                });
            }
        }
        if end == small.len() {
            break;
        }
        start += config.stride;
    }

    candidates.sort_by(|a, b| {
        a.frame_index
            .cmp(&b.frame_index)
            .then(b.confidence.total_cmp(&a.confidence))
    });

    // Merge chains of detections no more than merge_window frames apart,
    // keeping the highest-confidence member (earliest on ties).
    let mut merged: Vec<ShotBoundary> = Vec::new();
    let mut group: Option<ShotBoundary> = None;
    let mut group_last_index = 0u64;
    for cand in candidates {
        match group {
            Some(best) if cand.frame_index - group_last_index <= config.merge_window => {
                group_last_index = cand.frame_index;
                if cand.confidence > best.confidence {
                    group = Some(cand);
                }
            }
            Some(best) => {
                merged.push(best);
                group = Some(cand);
                group_last_index = cand.frame_index;
            }
            None => {
                group = Some(cand);
                group_last_index = cand.frame_index;
            }
        }
    }
    if let Some(best) = group {
        merged.push(best);
    }
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame_io::Chroma;
    use crate::synth::{generate_video, SynthSpec};

    /// Test detector that fires fixed probabilities at absolute frame
    /// indices; needs the caller to tell it where each window starts, so it
    /// tracks invocation order.
    struct ScriptedDetector {
        hits: Vec<(usize, f64)>,
        stride: usize,
        calls: std::cell::Cell<usize>,
    }

    impl BoundaryDetector for ScriptedDetector {
        fn probe(&self, frames: &[Vec<u8>]) -> Result<Vec<f64>, ClientError> {
            let start = self.calls.get() * self.stride;
            self.calls.set(self.calls.get() + 1);
            let mut probs = vec![0.0f64; frames.len()];
            for &(index, p) in &self.hits {
                if index >= start && index < start + frames.len() {
                    probs[index - start] = probs[index - start].max(p);
                }
            }
            Ok(probs)
        }
    }

    fn stream(frames: usize) -> (StreamHeader, Vec<Frame>) {
        let (header, frames, _) = generate_video(&SynthSpec {
            width: 16,
            height: 16,
            fps_num: 30,
            fps_den: 1,
            shot_lengths: vec![frames as u64],
            colors: vec![(90, 90, 200)],
            noise: 0,
            seed: 0,
        });
        (header, frames)
    }

    #[test]
    fn all_zero_probabilities_give_no_boundaries() {
        let (header, frames) = stream(130);
        let out =
            detect_shots_neural(&frames, &header, &StubBoundaryDetector, &Default::default())
                .unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn single_spike_maps_to_global_index() {
        let (header, frames) = stream(100);
        let det = ScriptedDetector {
            hits: vec![(50, 1.0)],
            stride: 50,
            calls: std::cell::Cell::new(0),
        };
        let out = detect_shots_neural(&frames, &header, &det, &Default::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].frame_index, 50);
        assert_eq!(out[0].confidence, 1.0);
    }

    #[test]
    fn overlapping_windows_merge_within_two_frames() {
        // 150 frames -> windows at 0 and 50. The cut at 70 is seen by both;
        // the second window reports it one frame off with lower confidence.
        let (header, frames) = stream(150);
        let calls = std::cell::Cell::new(0);
        struct TwoWindow {
            calls: std::cell::Cell<usize>,
        }
        impl BoundaryDetector for TwoWindow {
            fn probe(&self, frames: &[Vec<u8>]) -> Result<Vec<f64>, ClientError> {
                let call = self.calls.get();
                self.calls.set(call + 1);
                let mut probs = vec![0.0; frames.len()];
                match call {
                    0 => probs[70] = 0.9,  // global 70
                    1 => probs[21] = 0.6,  // global 71, duplicate
                    _ => {}
                }
                Ok(probs)
            }
        }
        let out = detect_shots_neural(&frames, &header, &TwoWindow { calls }, &Default::default())
            .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].frame_index, 70);
        assert_eq!(out[0].confidence, 0.9);
    }

    #[test]
    fn short_window_padded_by_repetition() {
        let payload = vec![0u8; (DETECTOR_FRAME_WIDTH * DETECTOR_FRAME_HEIGHT * 3) as usize];
        struct LenChecker;
        impl BoundaryDetector for LenChecker {
            fn probe(&self, frames: &[Vec<u8>]) -> Result<Vec<f64>, ClientError> {
                assert_eq!(frames.len(), DETECTOR_WINDOW);
                Ok(vec![0.0; DETECTOR_WINDOW])
            }
        }
        let window = vec![payload; 30];
        neural_boundary_probe(&window, &LenChecker).unwrap();
    }

    #[test]
    fn malformed_response_rejected() {
        struct ShortResponse;
        impl BoundaryDetector for ShortResponse {
            fn probe(&self, _frames: &[Vec<u8>]) -> Result<Vec<f64>, ClientError> {
                Ok(vec![0.0; 7])
            }
        }
        let window = vec![vec![0u8; 48 * 27 * 3]; DETECTOR_WINDOW];
        assert!(matches!(
            neural_boundary_probe(&window, &ShortResponse),
            Err(SplitterError::Client(ClientError::Malformed(_)))
        ));
    }

    #[test]
    fn detector_payload_has_expected_size() {
        let header = StreamHeader::new(64, 36, 30, 1, Chroma::C420);
        let frame = Frame {
            data: vec![100; header.frame_len()],
            pts_index: 0,
        };
        let small = downscale_for_detector(&frame, &header);
        assert_eq!(small.len(), 48 * 27 * 3);
    }
}
