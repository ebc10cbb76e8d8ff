//! Shot boundary detection, clip length rules and detector evaluation.

mod eval;
mod histogram;
mod neural;
mod rules;

pub use eval::{eval_split, parse_boundary_lines, SplitEvalResult};
pub use histogram::{detect_shots_histogram, hist_distance, hsv_histogram, HsvHistograms};
pub use neural::{
    detect_shots_neural, downscale_for_detector, neural_boundary_probe, BoundaryDetector,
    NeuralDetectorConfig, StubBoundaryDetector, DETECTOR_FRAME_HEIGHT, DETECTOR_FRAME_WIDTH,
    DETECTOR_WINDOW,
};
pub use rules::{apply_clip_rules, range_to_midpoint, Clip};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A detected cut: the first frame of the new shot, with the detector's
/// confidence in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotBoundary {
    pub frame_index: u64,
    pub confidence: f64,
}

#[derive(Debug, Error)]
pub enum SplitterError {
    #[error("histogram bin counts differ: {0} vs {1}")]
    BinMismatch(usize, usize),
    #[error("boundary annotation line {line}: {detail}")]
    BadAnnotation { line: usize, detail: String },
    #[error(transparent)]
    Client(#[from] crate::client::ClientError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
