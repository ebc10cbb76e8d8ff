//! Motion statistics and the rule-based motion classifier.

use serde::{Deserialize, Serialize};

use super::{FilterVerdict, FlowField, RejectReason};

/// Aggregate motion features of a clip, pooled over its flow fields.
///
/// Only blocks at or above the confidence floor contribute. Coherence is
/// the resultant length of the direction distribution (1 = all moving
/// blocks agree, 0 = directions cancel). Radial alignment is the largest
/// fraction of moving blocks pointing consistently outward from — or
/// consistently inward toward — the frame center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionStats {
    pub mean_magnitude: f64,
    pub mean_vector: (f64, f64),
    pub angular_coherence: f64,
    pub temporal_variance: f64,
    pub radial_alignment: f64,
}

/// Knobs for [`motion_stats`] and [`classify_motion`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionThresholds {
    /// Blocks below this confidence are ignored.
    pub confidence_floor: f64,
    /// Mean magnitude below this (pixels/frame) marks the clip static.
    pub epsilon_static: f64,
    /// Coherence at or above this earns a pan/tilt tag.
    pub coherence_pan: f64,
    /// Temporal variance above this, combined with low coherence, marks the
    /// clip shaky.
    pub var_shaky: f64,
    /// Coherence below this is "low" for the shaky rule.
    pub coherence_shaky: f64,
    /// Radial alignment at or above this earns a zoom tag.
    pub zoom_radial: f64,
}

impl Default for MotionThresholds {
    fn default() -> Self {
        Self {
            confidence_floor: 0.1,
            epsilon_static: 0.3,
            coherence_pan: 0.7,
            var_shaky: 4.0,
            coherence_shaky: 0.3,
            zoom_radial: 0.7,
        }
    }
}

/// Pools per-block flow over a clip into [`MotionStats`].
pub fn motion_stats(fields: &[FlowField], confidence_floor: f64) -> MotionStats {
    assert!(!fields.is_empty(), "need at least one flow field");

    let mut count = 0u64;
    let mut mag_sum = 0.0;
    let mut dx_sum = 0.0;
    let mut dy_sum = 0.0;
    let mut unit_dx = 0.0;
    let mut unit_dy = 0.0;
    let mut moving = 0u64;
    let mut outward = 0u64;
    let mut inward = 0u64;
    let mut radial_considered = 0u64;
    let mut per_frame_means = Vec::with_capacity(fields.len());

    for field in fields {
        let center_x = field.frame_w as f64 / 2.0;
        let center_y = field.frame_h as f64 / 2.0;
        let mut frame_mag = 0.0;
        let mut frame_count = 0u64;
        for by in 0..field.grid_h {
            for bx in 0..field.grid_w {
                let i = by * field.grid_w + bx;
                if f64::from(field.confidence[i]) < confidence_floor {
                    continue;
                }
                let (dx, dy) = field.vectors[i];
                let (dx, dy) = (f64::from(dx), f64::from(dy));
                let mag = (dx * dx + dy * dy).sqrt();
                count += 1;
                mag_sum += mag;
                dx_sum += dx;
                dy_sum += dy;
                frame_mag += mag;
                frame_count += 1;
                if mag > 0.0 {
                    moving += 1;
                    unit_dx += dx / mag;
                    unit_dy += dy / mag;
                    let (cx, cy) = field.block_center(bx, by);
                    let rx = cx - center_x;
                    let ry = cy - center_y;
                    if rx * rx + ry * ry > 1e-12 {
                        radial_considered += 1;
                        let dot = dx * rx + dy * ry;
                        if dot > 1e-12 {
                            outward += 1;
                        } else if dot < -1e-12 {
                            inward += 1;
                        }
                    }
                }
            }
        }
        per_frame_means.push(if frame_count > 0 {
            frame_mag / frame_count as f64
        } else {
            0.0
        });
    }

    let mean_magnitude = if count > 0 { mag_sum / count as f64 } else { 0.0 };
    let mean_vector = if count > 0 {
        (dx_sum / count as f64, dy_sum / count as f64)
    } else {
        (0.0, 0.0)
    };
    let angular_coherence = if moving > 0 {
        (unit_dx * unit_dx + unit_dy * unit_dy).sqrt() / moving as f64
    } else {
        0.0
    };
    let mean_of_means =
        per_frame_means.iter().sum::<f64>() / per_frame_means.len() as f64;
    let temporal_variance = per_frame_means
        .iter()
        .map(|m| (m - mean_of_means).powi(2))
        .sum::<f64>()
        / per_frame_means.len() as f64;
    let radial_alignment = if radial_considered > 0 {
        outward.max(inward) as f64 / radial_considered as f64
    } else {
        0.0
    };

    MotionStats {
        mean_magnitude,
        mean_vector,
        angular_coherence,
        temporal_variance,
        radial_alignment,
    }
}

/// Pure rule-based classification of [`MotionStats`].
///
/// Static clips and shaky clips (high temporal variance with incoherent
/// direction) fail. Passing clips are tagged `pan`/`tilt` when motion is
/// coherent along an axis, and `zoom` when block vectors align radially.
pub fn classify_motion(
    clip_id: &str,
    stats: &MotionStats,
    thresholds: &MotionThresholds,
) -> FilterVerdict {
    let mut verdict = if stats.mean_magnitude < thresholds.epsilon_static {
        let mut v = FilterVerdict::fail(clip_id, RejectReason::Static);
        v.tags.insert("static".into());
        v
    } else if stats.temporal_variance > thresholds.var_shaky
        && stats.angular_coherence < thresholds.coherence_shaky
    {
        let mut v = FilterVerdict::fail(clip_id, RejectReason::Shaky);
        v.tags.insert("shaky".into());
        v
    } else {
        let mut v = FilterVerdict::pass(clip_id);
        if stats.angular_coherence >= thresholds.coherence_pan {
            let (dx, dy) = stats.mean_vector;
            if dx.abs() >= dy.abs() {
                v.tags.insert("pan".into());
            } else {
                v.tags.insert("tilt".into());
            }
        }
        if stats.radial_alignment >= thresholds.zoom_radial {
            v.tags.insert("zoom".into());
        }
        v
    };

    verdict
        .scores
        .insert("motion_mean_magnitude".into(), stats.mean_magnitude);
    verdict
        .scores
        .insert("motion_coherence".into(), stats.angular_coherence);
    verdict
        .scores
        .insert("motion_temporal_variance".into(), stats.temporal_variance);
    verdict
        .scores
        .insert("motion_radial_alignment".into(), stats.radial_alignment);
    verdict
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn field_from_vectors(grid_w: usize, grid_h: usize, vectors: Vec<(f32, f32)>) -> FlowField {
        let block = 16;
        FlowField {
            block_size: block,
            grid_w,
            grid_h,
            frame_w: (grid_w * block) as u32,
            frame_h: (grid_h * block) as u32,
            vectors,
            confidence: vec![1.0; grid_w * grid_h],
        }
    }

    #[test]
    fn all_zero_flow_is_fully_still() {
        let field = field_from_vectors(4, 4, vec![(0.0, 0.0); 16]);
        let stats = motion_stats(&[field], 0.1);
        assert_eq!(stats.mean_magnitude, 0.0);
        assert_eq!(stats.angular_coherence, 0.0);
        assert_eq!(stats.temporal_variance, 0.0);
    }

    #[test]
    fn uniform_flow_is_fully_coherent() {
        let field = field_from_vectors(4, 4, vec![(4.0, 0.0); 16]);
        let stats = motion_stats(&[field], 0.1);
        assert_abs_diff_eq!(stats.mean_vector.0, 4.0);
        assert_abs_diff_eq!(stats.mean_vector.1, 0.0);
        assert_abs_diff_eq!(stats.angular_coherence, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(stats.mean_magnitude, 4.0);
    }

    #[test]
    fn opposing_halves_cancel_direction_but_not_magnitude() {
        let mut vectors = vec![(4.0, 0.0); 8];
        vectors.extend(vec![(-4.0, 0.0); 8]);
        let field = field_from_vectors(4, 4, vectors);
        let stats = motion_stats(&[field], 0.1);
        assert_abs_diff_eq!(stats.mean_vector.0, 0.0);
        assert_abs_diff_eq!(stats.mean_vector.1, 0.0);
        assert_abs_diff_eq!(stats.angular_coherence, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(stats.mean_magnitude, 4.0);
    }

    #[test]
    fn magnitude_dominates_mean_vector() {
        for seed in 0..20u64 {
            let vectors: Vec<(f32, f32)> = (0..16)
                .map(|i| {
                    let a = (seed * 31 + i * 17) as f32;
                    (a.sin() * 3.0, a.cos() * 2.0)
                })
                .collect();
            let field = field_from_vectors(4, 4, vectors);
            let stats = motion_stats(&[field], 0.1);
            let mv = (stats.mean_vector.0.powi(2) + stats.mean_vector.1.powi(2)).sqrt();
            assert!(stats.mean_magnitude + 1e-12 >= mv);
            assert!(stats.angular_coherence <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn low_confidence_blocks_ignored() {
        let mut field = field_from_vectors(2, 2, vec![(9.0, 0.0); 4]);
        field.confidence = vec![0.0, 0.0, 0.0, 1.0];
        let stats = motion_stats(&[field], 0.1);
        assert_abs_diff_eq!(stats.mean_magnitude, 9.0);
    }

    #[test]
    fn static_clip_fails() {
        let stats = MotionStats {
            mean_magnitude: 0.1,
            mean_vector: (0.0, 0.0),
            angular_coherence: 0.0,
            temporal_variance: 0.0,
            radial_alignment: 0.0,
        };
        let verdict = classify_motion("c", &stats, &MotionThresholds::default());
        assert!(!verdict.pass);
        assert_eq!(verdict.reason, Some(RejectReason::Static));
        assert!(verdict.tags.contains("static"));
    }

    #[test]
    fn coherent_horizontal_motion_tagged_pan() {
        let stats = MotionStats {
            mean_magnitude: 4.0,
            mean_vector: (3.8, 0.2),
            angular_coherence: 0.95,
            temporal_variance: 0.5,
            radial_alignment: 0.5,
        };
        let verdict = classify_motion("c", &stats, &MotionThresholds::default());
        assert!(verdict.pass);
        assert!(verdict.tags.contains("pan"));
        assert!(!verdict.tags.contains("tilt"));
    }

    #[test]
    fn coherent_vertical_motion_tagged_tilt() {
        let stats = MotionStats {
            mean_magnitude: 4.0,
            mean_vector: (0.1, -3.9),
            angular_coherence: 0.9,
            temporal_variance: 0.5,
            radial_alignment: 0.4,
        };
        let verdict = classify_motion("c", &stats, &MotionThresholds::default());
        assert!(verdict.pass);
        assert!(verdict.tags.contains("tilt"));
    }

    #[test]
    fn shaky_clip_fails() {
        let stats = MotionStats {
            mean_magnitude: 5.0,
            mean_vector: (0.1, 0.1),
            angular_coherence: 0.1,
            temporal_variance: 9.0,
            radial_alignment: 0.3,
        };
        let verdict = classify_motion("c", &stats, &MotionThresholds::default());
        assert!(!verdict.pass);
        assert_eq!(verdict.reason, Some(RejectReason::Shaky));
    }

    #[test]
    fn synthetic_zoom_field_tagged_zoom() {
        // Vectors proportional to (p - center): pure outward expansion.
        let grid = 6usize;
        let block = 16usize;
        let frame_w = (grid * block) as u32;
        let frame_h = (grid * block) as u32;
        let mut vectors = Vec::new();
        for by in 0..grid {
            for bx in 0..grid {
                let cx = (bx * block + block / 2) as f64 - frame_w as f64 / 2.0;
                let cy = (by * block + block / 2) as f64 - frame_h as f64 / 2.0;
                vectors.push(((0.02 * cx) as f32, (0.02 * cy) as f32));
            }
        }
        let field = FlowField {
            block_size: block,
            grid_w: grid,
            grid_h: grid,
            frame_w,
            frame_h,
            vectors,
            confidence: vec![1.0; grid * grid],
        };
        let stats = motion_stats(&[field], 0.1);
        assert!(stats.radial_alignment >= 0.99, "{stats:?}");
        // Radial field: directions cancel, so no pan/tilt.
        assert!(stats.angular_coherence < 0.3);

        let mut thresholds = MotionThresholds::default();
        thresholds.epsilon_static = 0.2;
        let verdict = classify_motion("c", &stats, &thresholds);
        assert!(verdict.pass, "{verdict:?}");
        assert!(verdict.tags.contains("zoom"));
    }

    #[test]
    fn classification_is_a_pure_function_of_stats() {
        // Golden table over a grid of stats: same input, same verdict, and
        // the expected pass/fail split.
        let thresholds = MotionThresholds::default();
        let grid = [
            (0.0, 0.0, 0.0, 0.0, false),
            (0.29, 0.9, 0.0, 0.0, false), // just under the static floor
            (0.31, 0.9, 0.0, 0.0, true),
            (5.0, 0.1, 9.0, 0.0, false), // shaky
            (5.0, 0.5, 9.0, 0.0, true),  // high variance but coherent
            (5.0, 0.1, 3.0, 0.0, true),  // incoherent but steady
        ];
        for &(mag, coh, var, radial, expect_pass) in &grid {
            let stats = MotionStats {
                mean_magnitude: mag,
                mean_vector: (mag, 0.0),
                angular_coherence: coh,
                temporal_variance: var,
                radial_alignment: radial,
            };
            let a = classify_motion("c", &stats, &thresholds);
            let b = classify_motion("c", &stats, &thresholds);
            assert_eq!(a, b);
            assert_eq!(a.pass, expect_pass, "stats {stats:?}");
        }
    }
}
