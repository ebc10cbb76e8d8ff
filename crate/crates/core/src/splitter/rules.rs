//! Clip length rules.
//!
//! Segments between consecutive boundaries become clips. Clips shorter than
//! 2 seconds are discarded; clips longer than 60 seconds are split into
//! equal parts, which by construction leaves every part at least ~30
//! seconds long. Duration comparisons are done in exact integer arithmetic
//! (`frames * fps_den` vs `seconds * fps_num`) so the 2 s and 60 s
//! boundaries behave exactly.

use serde::{Deserialize, Serialize};

const MIN_SECONDS: u64 = 2;
const MAX_SECONDS: u64 = 60;

/// A kept clip: a frame range within a source stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clip {
    pub source_id: String,
    pub start_frame: u64,
    pub end_frame: u64,
    pub fps_num: u32,
    pub fps_den: u32,
}

impl Clip {
    pub fn frame_count(&self) -> u64 {
        self.end_frame - self.start_frame
    }

    pub fn duration_seconds(&self) -> f64 {
        self.frame_count() as f64 * self.fps_den as f64 / self.fps_num as f64
    }
}

/// Midpoint convention for converting a transition range annotation into a
/// single transition frame index.
pub fn range_to_midpoint(start: u64, end: u64) -> u64 {
    debug_assert!(start <= end);
    (start + end) / 2
}

/// Cuts the stream at `boundaries` and applies the 2–60 s length rules.
///
/// Boundaries must be sorted and within `(0, stream_len)`. Over-long
/// segments are split into `k` equal parts where `k` is the smallest count
/// whose parts all fit in 60 s; for any fps where 60 s is a whole number of
/// frames this equals `ceil(duration / 60)`.
pub fn apply_clip_rules(
    boundaries: &[u64],
    stream_len: u64,
    fps: (u32, u32),
    source_id: &str,
) -> Vec<Clip> {
    let (num, den) = fps;
    assert!(num > 0 && den > 0, "frame rate must be positive");
    let mut cuts = Vec::with_capacity(boundaries.len() + 2);
    cuts.push(0);
    cuts.extend(
        boundaries
            .iter()
            .copied()
            .filter(|&b| b > 0 && b < stream_len),
    );
    cuts.push(stream_len);

    let num = num as u64;
    let den = den as u64;
    let max_frames = (MAX_SECONDS * num / den).max(1);

    let mut clips = Vec::new();
    for pair in cuts.windows(2) {
        let (start, end) = (pair[0], pair[1]);
        if end <= start {
            continue;
        }
        let frames = end - start;
        if frames * den < MIN_SECONDS * num {
            continue; // under 2 s: discarded
        }
        if frames * den <= MAX_SECONDS * num {
            clips.push(Clip {
                source_id: source_id.to_string(),
                start_frame: start,
                end_frame: end,
                fps_num: num as u32,
                fps_den: den as u32,
            });
            continue;
        }
        let parts = frames.div_ceil(max_frames);
        let base = frames / parts;
        let remainder = frames % parts;
        let mut cursor = start;
        for i in 0..parts {
            let len = base + u64::from(i < remainder);
            clips.push(Clip {
                source_id: source_id.to_string(),
                start_frame: cursor,
                end_frame: cursor + len,
                fps_num: num as u32,
                fps_den: den as u32,
            });
            cursor += len;
        }
        debug_assert_eq!(cursor, end);
    }
    clips
}

#[cfg(test)]
mod tests {
    use super::*;

    fn durations(clips: &[Clip]) -> Vec<f64> {
        clips.iter().map(|c| c.duration_seconds()).collect()
    }

    #[test]
    fn sub_two_second_segment_dropped() {
        // 45 frames at 30 fps = 1.5 s.
        let clips = apply_clip_rules(&[45], 145, (30, 1), "v");
        assert_eq!(clips.len(), 1);
        assert_eq!((clips[0].start_frame, clips[0].end_frame), (45, 145));
    }

    #[test]
    fn ninety_second_segment_splits_into_two_equal_halves() {
        let clips = apply_clip_rules(&[], 2700, (30, 1), "v");
        assert_eq!(durations(&clips), vec![45.0, 45.0]);
        assert_eq!(clips[0].end_frame, clips[1].start_frame);
    }

    #[test]
    fn exactly_sixty_seconds_stays_unsplit() {
        let clips = apply_clip_rules(&[], 1800, (30, 1), "v");
        assert_eq!(durations(&clips), vec![60.0]);
    }

    #[test]
    fn two_second_boundary_is_inclusive() {
        assert_eq!(apply_clip_rules(&[], 199, (100, 1), "v").len(), 0); // 1.99 s
        assert_eq!(apply_clip_rules(&[], 200, (100, 1), "v").len(), 1); // 2.00 s
    }

    #[test]
    fn kept_clip_ranges_never_overlap_and_stay_in_bounds() {
        for seed in 0..50u64 {
            let len = 200 + seed * 371 % 9000;
            let boundaries: Vec<u64> = (1..=3).map(|i| i * len / 4 + seed % 7).collect();
            let clips = apply_clip_rules(&boundaries, len, (24, 1), "v");
            let mut prev_end = 0;
            for clip in &clips {
                assert!(clip.start_frame >= prev_end);
                assert!(clip.end_frame <= len);
                let d = clip.duration_seconds();
                assert!((2.0..=60.0).contains(&d), "duration {d}");
                prev_end = clip.end_frame;
            }
        }
    }

    #[test]
    fn fractional_fps_parts_never_exceed_sixty_seconds() {
        // 200 frames at 10/9 fps = 180 s; naive thirds would run 60.3 s.
        let clips = apply_clip_rules(&[], 200, (10, 9), "v");
        assert!(!clips.is_empty());
        for clip in &clips {
            assert!(clip.duration_seconds() <= 60.0 + 1e-12);
            assert!(clip.duration_seconds() >= 2.0);
        }
        let total: u64 = clips.iter().map(Clip::frame_count).sum();
        assert_eq!(total, 200);
    }

    #[test]
    fn midpoint_uses_floor() {
        assert_eq!(range_to_midpoint(100, 110), 105);
        assert_eq!(range_to_midpoint(10, 15), 12);
        assert_eq!(range_to_midpoint(7, 7), 7);
    }
}
