//! Synthetic test stream generation.
//!
//! Produces y4m videos made of solid-color shots with hard cuts at known
//! frame indices, optionally with per-pixel luma noise. These drive the
//! detector benchmarks, the end-to-end pipeline tests and the `synth` CLI
//! command.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::frame_io::{rgb_to_yuv, Chroma, Frame, FrameIoError, StreamHeader, Y4mWriter};

/// Description of one synthetic video.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub width: u32,
    pub height: u32,
    pub fps_num: u32,
    pub fps_den: u32,
    /// Length of each shot in frames; cuts fall between consecutive shots.
    pub shot_lengths: Vec<u64>,
    /// One RGB color per shot. Cycled if shorter than `shot_lengths`.
    pub colors: Vec<(u8, u8, u8)>,
    /// Peak luma noise amplitude (0 = clean solid colors).
    pub noise: u8,
    pub seed: u64,
}

/// Palette of strongly separated hues, so consecutive shots land in
/// different histogram bins.
pub const PALETTE: [(u8, u8, u8); 8] = [
    (220, 30, 30),
    (30, 200, 40),
    (40, 60, 220),
    (230, 210, 40),
    (40, 210, 210),
    (200, 50, 200),
    (240, 140, 30),
    (120, 240, 120),
];

fn solid_c420(header: &StreamHeader, rgb: (u8, u8, u8)) -> Vec<u8> {
    let (y, u, v) = rgb_to_yuv(rgb.0, rgb.1, rgb.2);
    let luma = header.luma_len();
    let chroma = luma / 4;
    let mut data = vec![y; luma];
    data.extend(std::iter::repeat(u).take(chroma));
    data.extend(std::iter::repeat(v).take(chroma));
    data
}

/// Generates the frames and the ground-truth cut indices (first frame of
/// each new shot).
pub fn generate_video(spec: &SynthSpec) -> (StreamHeader, Vec<Frame>, Vec<u64>) {
    let total: u64 = spec.shot_lengths.iter().sum();
    let mut header = StreamHeader::new(
        spec.width,
        spec.height,
        spec.fps_num,
        spec.fps_den,
        Chroma::C420,
    );
    header.frame_count = Some(total);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut frames = Vec::with_capacity(total as usize);
    let mut boundaries = Vec::new();
    let mut index = 0u64;
    for (shot, &len) in spec.shot_lengths.iter().enumerate() {
        if shot > 0 {
            boundaries.push(index);
        }
        let color = spec.colors[shot % spec.colors.len()];
        let base = solid_c420(&header, color);
        for _ in 0..len {
            let mut data = base.clone();
            if spec.noise > 0 {
                let luma = header.luma_len();
                for px in data[..luma].iter_mut() {
                    let delta = rng.gen_range(-(spec.noise as i16)..=spec.noise as i16);
                    *px = (*px as i16 + delta).clamp(0, 255) as u8;
                }
            }
            frames.push(Frame {
                data,
                pts_index: index,
            });
            index += 1;
        }
    }
    (header, frames, boundaries)
}

/// Generates and writes a video, returning its ground-truth boundaries.
pub fn write_video(path: &Path, spec: &SynthSpec) -> Result<Vec<u64>, FrameIoError> {
    let (header, frames, boundaries) = generate_video(spec);
    let file = std::fs::File::create(path)?;
    let mut writer = Y4mWriter::new(std::io::BufWriter::new(file), header)?;
    for frame in &frames {
        writer.write_frame(frame)?;
    }
    writer.finish()?;
    Ok(boundaries)
}

/// Random multi-shot spec: `cuts + 1` shots with lengths in
/// `[min_shot, max_shot]` and colors drawn from the palette without
/// immediate repeats.
pub fn random_spec(
    width: u32,
    height: u32,
    fps: (u32, u32),
    cuts: usize,
    min_shot: u64,
    max_shot: u64,
    noise: u8,
    seed: u64,
) -> SynthSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shot_lengths: Vec<u64> = (0..=cuts)
        .map(|_| rng.gen_range(min_shot..=max_shot))
        .collect();
    let mut colors = Vec::with_capacity(cuts + 1);
    let mut last = usize::MAX;
    for _ in 0..=cuts {
        let mut pick = rng.gen_range(0..PALETTE.len());
        if pick == last {
            pick = (pick + 1) % PALETTE.len();
        }
        colors.push(PALETTE[pick]);
        last = pick;
    }
    SynthSpec {
        width,
        height,
        fps_num: fps.0,
        fps_den: fps.1,
        shot_lengths,
        colors,
        noise,
        seed: seed.wrapping_mul(0x9e37_79b9_7f4a_7c15),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundaries_match_shot_layout() {
        let spec = SynthSpec {
            width: 16,
            height: 16,
            fps_num: 30,
            fps_den: 1,
            shot_lengths: vec![60, 60],
            colors: vec![(255, 0, 0), (0, 0, 255)],
            noise: 0,
            seed: 1,
        };
        let (header, frames, boundaries) = generate_video(&spec);
        assert_eq!(frames.len(), 120);
        assert_eq!(boundaries, vec![60]);
        assert_eq!(header.frame_count, Some(120));
        assert_ne!(frames[59].data, frames[60].data);
        assert_eq!(frames[0].data, frames[59].data);
    }
}
