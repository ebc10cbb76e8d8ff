//! Raw frame stream I/O.
//!
//! The engine's interchange format is YUV4MPEG2 (y4m): self-describing,
//! codec-free and byte-exact testable. Compressed video only ever enters or
//! leaves through the external transcoder contract in [`transcode`].

mod color;
mod sample;
pub mod transcode;
mod y4m;

pub use color::{rgb_to_hsv, rgb_to_yuv, yuv_to_rgb};
pub use sample::sample_uniform_frames;
pub use y4m::{parse_y4m_header, write_y4m_bytes, Y4mReader, Y4mWriter};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Chroma subsampling layouts the engine understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Chroma {
    /// 4:2:0 — U and V planes are quarter size.
    C420,
    /// 4:4:4 — full-resolution chroma.
    C444,
}

/// Stream-level metadata parsed from the y4m header line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamHeader {
    pub width: u32,
    pub height: u32,
    pub fps_num: u32,
    pub fps_den: u32,
    pub chroma: Chroma,
    /// Declared frame count, when the producer knows it. Not part of the
    /// core y4m grammar; carried through an `XFRAMES=` extension token.
    pub frame_count: Option<u64>,
}

impl StreamHeader {
    pub fn new(width: u32, height: u32, fps_num: u32, fps_den: u32, chroma: Chroma) -> Self {
        Self {
            width,
            height,
            fps_num,
            fps_den,
            chroma,
            frame_count: None,
        }
    }

    /// Byte length of one frame payload under this header.
    pub fn frame_len(&self) -> usize {
        let wh = self.width as usize * self.height as usize;
        match self.chroma {
            Chroma::C420 => wh * 3 / 2,
            Chroma::C444 => wh * 3,
        }
    }

    /// Luma plane byte length.
    pub fn luma_len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn validate(&self) -> Result<(), FrameIoError> {
        if self.width == 0 || self.height == 0 {
            return Err(FrameIoError::InvalidDimensions {
                width: self.width,
                height: self.height,
            });
        }
        if self.fps_num == 0 || self.fps_den == 0 {
            return Err(FrameIoError::MissingField("F"));
        }
        if self.chroma == Chroma::C420 && (self.width % 2 != 0 || self.height % 2 != 0) {
            return Err(FrameIoError::InvalidDimensions {
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }
}

/// One decoded frame: planes stored back to back (Y, then U, then V).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub data: Vec<u8>,
    pub pts_index: u64,
}

impl Frame {
    pub fn luma<'a>(&'a self, header: &StreamHeader) -> &'a [u8] {
        &self.data[..header.luma_len()]
    }

    /// RGB value of the pixel at (x, y), honoring chroma subsampling.
    pub fn rgb_at(&self, header: &StreamHeader, x: u32, y: u32) -> (u8, u8, u8) {
        let w = header.width as usize;
        let luma_len = header.luma_len();
        let yv = self.data[y as usize * w + x as usize];
        let (u, v) = match header.chroma {
            Chroma::C420 => {
                let cw = w / 2;
                let ci = (y as usize / 2) * cw + x as usize / 2;
                let chroma_len = cw * (header.height as usize / 2);
                (
                    self.data[luma_len + ci],
                    self.data[luma_len + chroma_len + ci],
                )
            }
            Chroma::C444 => {
                let ci = y as usize * w + x as usize;
                (self.data[luma_len + ci], self.data[2 * luma_len + ci])
            }
        };
        yuv_to_rgb(yv, u, v)
    }

    /// Full-frame RGB conversion, row-major `[r, g, b]` triples.
    pub fn to_rgb(&self, header: &StreamHeader) -> Vec<u8> {
        let mut out = Vec::with_capacity(header.luma_len() * 3);
        for y in 0..header.height {
            for x in 0..header.width {
                let (r, g, b) = self.rgb_at(header, x, y);
                out.extend_from_slice(&[r, g, b]);
            }
        }
        out
    }
}

/// Nearest-neighbor resize of a row-major RGB buffer. Used to shrink frames
/// to the payload sizes the external model services expect.
pub fn resize_rgb_nearest(
    rgb: &[u8],
    src_w: u32,
    src_h: u32,
    dst_w: u32,
    dst_h: u32,
) -> Vec<u8> {
    assert_eq!(rgb.len(), src_w as usize * src_h as usize * 3);
    assert!(dst_w > 0 && dst_h > 0);
    let mut out = Vec::with_capacity(dst_w as usize * dst_h as usize * 3);
    for y in 0..dst_h {
        let sy = (y as u64 * src_h as u64 / dst_h as u64).min(src_h as u64 - 1) as usize;
        for x in 0..dst_w {
            let sx = (x as u64 * src_w as u64 / dst_w as u64).min(src_w as u64 - 1) as usize;
            let i = (sy * src_w as usize + sx) * 3;
            out.extend_from_slice(&rgb[i..i + 3]);
        }
    }
    out
}

#[derive(Debug, Error)]
pub enum FrameIoError {
    #[error("not a YUV4MPEG2 stream")]
    BadMagic,
    #[error("header missing required field {0}")]
    MissingField(&'static str),
    #[error("unsupported chroma layout {0:?}")]
    UnsupportedChroma(String),
    #[error("invalid frame dimensions {width}x{height}")]
    InvalidDimensions { width: u32, height: u32 },
    #[error("truncated frame at index {frame_index}: got {got} of {expected} bytes")]
    TruncatedFrame {
        frame_index: u64,
        got: usize,
        expected: usize,
    },
    #[error("bad frame marker at index {0}")]
    BadFrameMarker(u64),
    #[error("stream declared {declared} frames but ended after {actual}")]
    MissingFrames { declared: u64, actual: u64 },
    #[error("frame payload length {got} does not match header ({expected})")]
    PayloadMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
