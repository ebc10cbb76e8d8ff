//! Block-matching motion estimation on luma planes.
//!
//! A codec-free analogue of encoder motion vectors: for each block of the
//! first frame, exhaustively search a window in the second frame for the
//! displacement minimizing the sum of absolute differences.

use crate::frame_io::{Frame, StreamHeader};

use super::FilterError;

/// Per-block motion vectors between two frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub block_size: usize,
    pub grid_w: usize,
    pub grid_h: usize,
    pub frame_w: u32,
    pub frame_h: u32,
    /// Row-major `(dx, dy)` per block, in pixels.
    pub vectors: Vec<(f32, f32)>,
    /// `1 - best_sad / worst_sad` per block; 0 on featureless blocks where
    /// every candidate ties.
    pub confidence: Vec<f32>,
}

impl FlowField {
    /// Pixel coordinates of the center of block `(bx, by)`, accounting for
    /// clipped edge blocks.
    pub fn block_center(&self, bx: usize, by: usize) -> (f64, f64) {
        let x0 = bx * self.block_size;
        let y0 = by * self.block_size;
        let w = (self.frame_w as usize - x0).min(self.block_size);
        let h = (self.frame_h as usize - y0).min(self.block_size);
        (x0 as f64 + w as f64 / 2.0, y0 as f64 + h as f64 / 2.0)
    }
}

fn sad(
    a: &[u8],
    b: &[u8],
    width: usize,
    ax: usize,
    ay: usize,
    bx: usize,
    by: usize,
    bw: usize,
    bh: usize,
) -> u32 {
    let mut total = 0u32;
    for row in 0..bh {
        let a_off = (ay + row) * width + ax;
        let b_off = (by + row) * width + bx;
        for col in 0..bw {
            total += u32::from(a[a_off + col].abs_diff(b[b_off + col]));
        }
    }
    total
}

/// Estimates per-block motion from `frame_a` to `frame_b`.
///
/// Candidate displacements range over `[-search_radius, search_radius]` in
/// both axes, skipping positions that fall outside the frame. Ties on SAD
/// are broken by smaller `|dx| + |dy|`, then lexicographically on
/// `(dx, dy)`, so featureless blocks come out as `(0, 0)`.
pub fn estimate_flow_block(
    frame_a: &Frame,
    frame_b: &Frame,
    header: &StreamHeader,
    block_size: usize,
    search_radius: i32,
) -> Result<FlowField, FilterError> {
    if frame_a.data.len() != frame_b.data.len() {
        return Err(FilterError::DimensionMismatch(format!(
            "frame payloads differ: {} vs {}",
            frame_a.data.len(),
            frame_b.data.len()
        )));
    }
    assert!(block_size >= 1 && search_radius >= 0);
    let width = header.width as usize;
    let height = header.height as usize;
    let luma_a = frame_a.luma(header);
    let luma_b = frame_b.luma(header);

    let grid_w = width.div_ceil(block_size);
    let grid_h = height.div_ceil(block_size);
    let mut vectors = Vec::with_capacity(grid_w * grid_h);
    let mut confidence = Vec::with_capacity(grid_w * grid_h);

    for by in 0..grid_h {
        for bx in 0..grid_w {
            let x0 = bx * block_size;
            let y0 = by * block_size;
            let bw = (width - x0).min(block_size);
            let bh = (height - y0).min(block_size);

            let mut best: Option<(u32, i32, i32, i32)> = None; // (sad, |dx|+|dy|, dx, dy)
            let mut worst = 0u32;
            for dy in -search_radius..=search_radius {
                let ty = y0 as i64 + dy as i64;
                if ty < 0 || ty as usize + bh > height {
                    continue;
                }
                for dx in -search_radius..=search_radius {
                    let tx = x0 as i64 + dx as i64;
                    if tx < 0 || tx as usize + bw > width {
                        continue;
                    }
                    let cost = sad(
                        luma_a, luma_b, width, x0, y0, tx as usize, ty as usize, bw, bh,
                    );
                    worst = worst.max(cost);
                    let key = (cost, dx.abs() + dy.abs(), dx, dy);
                    if best.map_or(true, |b| key < b) {
                        best = Some(key);
                    }
                }
            }
            let (best_sad, _, dx, dy) = best.expect("(0,0) is always a valid candidate");
            vectors.push((dx as f32, dy as f32));
            confidence.push(if worst > 0 {
                1.0 - best_sad as f32 / worst as f32
            } else {
                0.0
            });
        }
    }

    Ok(FlowField {
        block_size,
        grid_w,
        grid_h,
        frame_w: header.width,
        frame_h: header.height,
        vectors,
        confidence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame_io::Chroma;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn textured_frame(header: &StreamHeader, seed: u64) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = vec![0u8; header.frame_len()];
        for px in data[..header.luma_len()].iter_mut() {
            *px = rng.gen();
        }
        for px in data[header.luma_len()..].iter_mut() {
            *px = 128;
        }
        Frame { data, pts_index: 0 }
    }

    fn shift_right(frame: &Frame, header: &StreamHeader, shift: usize) -> Frame {
        let width = header.width as usize;
        let mut data = frame.data.clone();
        let luma = header.luma_len();
        for row in 0..header.height as usize {
            for x in 0..width {
                let src = row * width + (x + width - shift) % width;
                data[row * width + x] = frame.data[src];
            }
        }
        let _ = luma;
        Frame {
            data,
            pts_index: 1,
        }
    }

    #[test]
    fn identical_frames_give_zero_vectors() {
        let header = StreamHeader::new(32, 32, 30, 1, Chroma::C420);
        let frame = textured_frame(&header, 1);
        let flow = estimate_flow_block(&frame, &frame, &header, 8, 4).unwrap();
        assert!(flow.vectors.iter().all(|&v| v == (0.0, 0.0)));
        assert!(flow.confidence.iter().all(|&c| c > 0.9));
    }

    #[test]
    fn shifted_copy_recovers_displacement() {
        let header = StreamHeader::new(48, 32, 30, 1, Chroma::C420);
        let a = textured_frame(&header, 2);
        let b = shift_right(&a, &header, 4);
        let flow = estimate_flow_block(&a, &b, &header, 8, 8).unwrap();
        let mut dxs: Vec<f32> = flow.vectors.iter().map(|v| v.0).collect();
        dxs.sort_by(f32::total_cmp);
        let median = dxs[dxs.len() / 2];
        assert_eq!(median, 4.0);
    }

    #[test]
    fn flat_frames_tie_break_to_zero_with_zero_confidence() {
        let header = StreamHeader::new(32, 32, 30, 1, Chroma::C420);
        let flat = Frame {
            data: vec![100; header.frame_len()],
            pts_index: 0,
        };
        let flow = estimate_flow_block(&flat, &flat, &header, 16, 8).unwrap();
        assert!(flow.vectors.iter().all(|&v| v == (0.0, 0.0)));
        assert!(flow.confidence.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let h420 = StreamHeader::new(32, 32, 30, 1, Chroma::C420);
        let h444 = StreamHeader::new(32, 32, 30, 1, Chroma::C444);
        let a = textured_frame(&h420, 3);
        let b = textured_frame(&h444, 3);
        assert!(matches!(
            estimate_flow_block(&a, &b, &h420, 8, 4),
            Err(FilterError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn returned_vector_minimizes_sad_exhaustively() {
        // Small frame: recompute every candidate cost and verify no
        // candidate beats the returned one.
        let header = StreamHeader::new(16, 16, 30, 1, Chroma::C420);
        let a = textured_frame(&header, 4);
        let b = textured_frame(&header, 5);
        let radius = 3i32;
        let block = 8usize;
        let flow = estimate_flow_block(&a, &b, &header, block, radius).unwrap();
        let width = header.width as usize;
        let height = header.height as usize;
        for by in 0..flow.grid_h {
            for bx in 0..flow.grid_w {
                let (vdx, vdy) = flow.vectors[by * flow.grid_w + bx];
                let x0 = bx * block;
                let y0 = by * block;
                let bw = (width - x0).min(block);
                let bh = (height - y0).min(block);
                let chosen = sad(
                    a.luma(&header),
                    b.luma(&header),
                    width,
                    x0,
                    y0,
                    (x0 as i64 + vdx as i64) as usize,
                    (y0 as i64 + vdy as i64) as usize,
                    bw,
                    bh,
                );
                for dy in -radius..=radius {
                    let ty = y0 as i64 + dy as i64;
                    if ty < 0 || ty as usize + bh > height {
                        continue;
                    }
                    for dx in -radius..=radius {
                        let tx = x0 as i64 + dx as i64;
                        if tx < 0 || tx as usize + bw > width {
                            continue;
                        }
                        let cost = sad(
                            a.luma(&header),
                            b.luma(&header),
                            width,
                            x0,
                            y0,
                            tx as usize,
                            ty as usize,
                            bw,
                            bh,
                        );
                        assert!(cost >= chosen, "candidate ({dx},{dy}) beats chosen vector");
                    }
                }
            }
        }
    }
}
