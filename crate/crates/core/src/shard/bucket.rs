//! Training bucket assignment.
//!
//! Every valid clip maps to exactly one (aspect, resolution, length)
//! bucket. Aspect matching minimizes `|ln(w/h) - ln(ratio)|` over the five
//! supported ratios — symmetric under frame transposition — with ties going
//! to the wider ratio.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ShardError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AspectBucket {
    Square1x1,
    Portrait3x4,
    Landscape4x3,
    Portrait9x16,
    Landscape16x9,
}

impl AspectBucket {
    pub const ALL: [AspectBucket; 5] = [
        AspectBucket::Square1x1,
        AspectBucket::Portrait3x4,
        AspectBucket::Landscape4x3,
        AspectBucket::Portrait9x16,
        AspectBucket::Landscape16x9,
    ];

    pub fn ratio(self) -> f64 {
        match self {
            AspectBucket::Square1x1 => 1.0,
            AspectBucket::Portrait3x4 => 3.0 / 4.0,
            AspectBucket::Landscape4x3 => 4.0 / 3.0,
            AspectBucket::Portrait9x16 => 9.0 / 16.0,
            AspectBucket::Landscape16x9 => 16.0 / 9.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AspectBucket::Square1x1 => "1x1",
            AspectBucket::Portrait3x4 => "3x4",
            AspectBucket::Landscape4x3 => "4x3",
            AspectBucket::Portrait9x16 => "9x16",
            AspectBucket::Landscape16x9 => "16x9",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionTier {
    /// Under 720 lines.
    Sd,
    /// 720 to 1079 lines.
    Hd,
    /// 1080 lines and up.
    Fhd,
}

impl ResolutionTier {
    pub fn label(self) -> &'static str {
        match self {
            ResolutionTier::Sd => "sd",
            ResolutionTier::Hd => "hd",
            ResolutionTier::Fhd => "fhd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthTier {
    /// [2, 10) seconds.
    Short,
    /// [10, 30) seconds.
    Medium,
    /// [30, 60] seconds.
    Long,
}

impl LengthTier {
    pub fn label(self) -> &'static str {
        match self {
            LengthTier::Short => "short",
            LengthTier::Medium => "medium",
            LengthTier::Long => "long",
        }
    }
}

/// The shard class of a clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bucket {
    pub aspect: AspectBucket,
    pub resolution: ResolutionTier,
    pub length: LengthTier,
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}_{}_{}",
            self.aspect.label(),
            self.resolution.label(),
            self.length.label()
        )
    }
}

impl FromStr for Bucket {
    type Err = ShardError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.splitn(3, '_');
        let (a, r, l) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(r), Some(l)) => (a, r, l),
            _ => return Err(ShardError::BadBucketLabel(s.to_string())),
        };
        let aspect = AspectBucket::ALL
            .into_iter()
            .find(|b| b.label() == a)
            .ok_or_else(|| ShardError::BadBucketLabel(s.to_string()))?;
        let resolution = [ResolutionTier::Sd, ResolutionTier::Hd, ResolutionTier::Fhd]
            .into_iter()
            .find(|t| t.label() == r)
            .ok_or_else(|| ShardError::BadBucketLabel(s.to_string()))?;
        let length = [LengthTier::Short, LengthTier::Medium, LengthTier::Long]
            .into_iter()
            .find(|t| t.label() == l)
            .ok_or_else(|| ShardError::BadBucketLabel(s.to_string()))?;
        Ok(Bucket {
            aspect,
            resolution,
            length,
        })
    }
}

/// Assigns a clip to its bucket.
///
/// Resolution tier uses the line count after normalizing orientation (the
/// short side for portrait content), so a 1080x1920 portrait clip lands in
/// the same tier as its 1920x1080 landscape twin.
pub fn assign_bucket(width: u32, height: u32, duration_seconds: f64) -> Result<Bucket, ShardError> {
    assert!(width > 0 && height > 0);
    if !(2.0..=60.0).contains(&duration_seconds) {
        return Err(ShardError::InvalidDuration(duration_seconds));
    }

    let log_ar = (f64::from(width) / f64::from(height)).ln();
    let mut best = AspectBucket::Square1x1;
    let mut best_distance = f64::INFINITY;
    for candidate in AspectBucket::ALL {
        let distance = (log_ar - candidate.ratio().ln()).abs();
        let better = distance < best_distance
            || (distance == best_distance && candidate.ratio() > best.ratio());
        if better {
            best = candidate;
            best_distance = distance;
        }
    }

    let lines = width.min(height);
    let resolution = if lines >= 1080 {
        ResolutionTier::Fhd
    } else if lines >= 720 {
        ResolutionTier::Hd
    } else {
        ResolutionTier::Sd
    };

    let length = if duration_seconds < 10.0 {
        LengthTier::Short
    } else if duration_seconds < 30.0 {
        LengthTier::Medium
    } else {
        LengthTier::Long
    };

    Ok(Bucket {
        aspect: best,
        resolution,
        length,
    })
}
