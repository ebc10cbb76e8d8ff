//! Clip filtering: motion, visual quality, text overlay and video type.
//!
//! The in-process pieces are the block-matching flow estimator, the
//! rule-based motion classifier, the percentile and threshold gates, MLP
//! inference for embedding-based classifiers, and category resampling.
//! Perceptual quality and aesthetic scores (and the embeddings the MLPs
//! consume) arrive through scorer/embedder clients.

mod flow;
mod mlp;
mod motion;
mod resample;
mod select;

pub use flow::{estimate_flow_block, FlowField};
pub use mlp::{MlpHead, MlpLayer, MlpWeights};
pub use motion::{classify_motion, motion_stats, MotionStats, MotionThresholds};
pub use resample::{default_category_targets, resample_weights};
pub use select::{aesthetic_gate, percentile_cut, PercentileCut};

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{encode_frames, stable_hash64, unit_from_hash, ClientError, HttpJson};

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite weight in layer {0}")]
    NonFiniteWeight(usize),
    #[error("category sets differ: {0}")]
    CategoryMismatch(String),
    #[error("observed share for category {0} is zero")]
    ZeroObserved(String),
    #[error("distribution does not sum to 1: {0} sums to {1}")]
    NotNormalized(&'static str, f64),
}

/// Why a clip was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Static,
    Shaky,
    LowQuality,
    LowAesthetic,
    TextOverlay,
    ExcludedCategory,
    Downsampled,
    Duplicate,
}

/// Outcome of one filter applied to one clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub clip_id: String,
    pub pass: bool,
    pub scores: BTreeMap<String, f64>,
    pub tags: BTreeSet<String>,
    pub reason: Option<RejectReason>,
}

impl FilterVerdict {
    pub fn pass(clip_id: &str) -> Self {
        Self {
            clip_id: clip_id.to_string(),
            pass: true,
            scores: BTreeMap::new(),
            tags: BTreeSet::new(),
            reason: None,
        }
    }

    pub fn fail(clip_id: &str, reason: RejectReason) -> Self {
        Self {
            clip_id: clip_id.to_string(),
            pass: false,
            scores: BTreeMap::new(),
            tags: BTreeSet::new(),
            reason: Some(reason),
        }
    }
}

/// Per-clip scoring service (perceptual quality or aesthetics — same wire
/// contract, distinct endpoints).
pub trait Scorer {
    fn score(&self, clip_id: &str, frames: &[Vec<u8>]) -> Result<f64, ClientError>;
}

/// Deterministic stand-in scorer: a stable hash of `(salt, clip_id)` mapped
/// into `[lo, hi]`.
#[derive(Debug, Clone)]
pub struct StubScorer {
    pub salt: String,
    pub lo: f64,
    pub hi: f64,
}

impl StubScorer {
    pub fn quality() -> Self {
        Self {
            salt: "quality".into(),
            lo: 0.0,
            hi: 10.0,
        }
    }

    pub fn aesthetic() -> Self {
        Self {
            salt: "aesthetic".into(),
            lo: 0.0,
            hi: 10.0,
        }
    }
}

impl Scorer for StubScorer {
    fn score(&self, clip_id: &str, _frames: &[Vec<u8>]) -> Result<f64, ClientError> {
        let u = unit_from_hash(stable_hash64(&format!("{}:{clip_id}", self.salt)));
        Ok(self.lo + u * (self.hi - self.lo))
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    clip_id: &'a str,
    frames: Vec<String>,
}

#[derive(Deserialize)]
struct ScoreResponse {
    score: f64,
}

/// Scorer over HTTP: POST `{clip_id, frames: [base64 224x224 RGB]}`,
/// response `{"score": f}`.
pub struct HttpScorer {
    http: HttpJson,
}

impl HttpScorer {
    pub fn new(endpoint: &str, timeout: Duration) -> Result<Self, ClientError> {
        Ok(Self {
            http: HttpJson::new(endpoint, timeout)?,
        })
    }
}

impl Scorer for HttpScorer {
    fn score(&self, clip_id: &str, frames: &[Vec<u8>]) -> Result<f64, ClientError> {
        let response: ScoreResponse = self.http.post(&ScoreRequest {
            clip_id,
            frames: encode_frames(frames),
        })?;
        if !response.score.is_finite() {
            return Err(ClientError::Malformed("non-finite score".into()));
        }
        Ok(response.score)
    }
}
