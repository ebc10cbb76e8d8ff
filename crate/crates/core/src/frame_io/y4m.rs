//! YUV4MPEG2 stream parsing and serialization.
//!
//! Grammar handled here: a header line `YUV4MPEG2 W.. H.. F..:.. I. A..:..
//! C...` followed by frames, each introduced by a `FRAME` line and carrying
//! a raw planar payload whose length is fixed by the header. Unknown `X`
//! extension tokens are ignored except `XFRAMES=`, which the writer emits
//! so generated streams can declare their length.

use std::io::{BufRead, BufReader, Read, Write};

use super::{Chroma, Frame, FrameIoError, StreamHeader};

/// Parses a y4m header from a byte buffer.
///
/// Returns the header and the offset of the first `FRAME` marker, i.e. the
/// number of bytes consumed including the trailing newline.
pub fn parse_y4m_header(bytes: &[u8]) -> Result<(StreamHeader, usize), FrameIoError> {
    let line_end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or(FrameIoError::BadMagic)?;
    let header = parse_header_line(&bytes[..line_end])?;
    Ok((header, line_end + 1))
}

fn parse_header_line(line: &[u8]) -> Result<StreamHeader, FrameIoError> {
    let text = std::str::from_utf8(line).map_err(|_| FrameIoError::BadMagic)?;
    let mut tokens = text.split_ascii_whitespace();
    if tokens.next() != Some("YUV4MPEG2") {
        return Err(FrameIoError::BadMagic);
    }

    let mut width: Option<u32> = None;
    let mut height: Option<u32> = None;
    let mut fps: Option<(u32, u32)> = None;
    let mut chroma = Chroma::C420; // y4m default when the C token is absent
    let mut frame_count: Option<u64> = None;

    for token in tokens {
        let (key, value) = token.split_at(1);
        match key {
            "W" => width = value.parse().ok(),
            "H" => height = value.parse().ok(),
            "F" => {
                let (n, d) = value.split_once(':').ok_or(FrameIoError::MissingField("F"))?;
                fps = Some((
                    n.parse().map_err(|_| FrameIoError::MissingField("F"))?,
                    d.parse().map_err(|_| FrameIoError::MissingField("F"))?,
                ));
            }
            "C" => {
                chroma = match value {
                    "420" | "420jpeg" | "420mpeg2" | "420paldv" => Chroma::C420,
                    "444" => Chroma::C444,
                    other => return Err(FrameIoError::UnsupportedChroma(other.to_string())),
                }
            }
            "X" => {
                if let Some(n) = value.strip_prefix("FRAMES=") {
                    frame_count = n.parse().ok();
                }
            }
            // Interlacing and pixel aspect don't affect payload layout.
            "I" | "A" => {}
            _ => {}
        }
    }

    let header = StreamHeader {
        width: width.ok_or(FrameIoError::MissingField("W"))?,
        height: height.ok_or(FrameIoError::MissingField("H"))?,
        fps_num: fps.ok_or(FrameIoError::MissingField("F"))?.0,
        fps_den: fps.ok_or(FrameIoError::MissingField("F"))?.1,
        chroma,
        frame_count,
    };
    header.validate()?;
    Ok(header)
}

/// Streaming y4m reader. Single-reader: frames are yielded in order and the
/// stream cannot be rewound.
pub struct Y4mReader<R: Read> {
    reader: BufReader<R>,
    header: StreamHeader,
    next_index: u64,
}

impl<R: Read> Y4mReader<R> {
    pub fn new(inner: R) -> Result<Self, FrameIoError> {
        let mut reader = BufReader::new(inner);
        let mut line = Vec::new();
        reader.read_until(b'\n', &mut line)?;
        if line.last() != Some(&b'\n') {
            return Err(FrameIoError::BadMagic);
        }
        line.pop();
        let header = parse_header_line(&line)?;
        Ok(Self {
            reader,
            header,
            next_index: 0,
        })
    }

    pub fn header(&self) -> &StreamHeader {
        &self.header
    }

    /// Reads the next frame, or `None` at a clean end of stream.
    pub fn read_frame(&mut self) -> Result<Option<Frame>, FrameIoError> {
        let mut marker = Vec::new();
        let n = self.reader.read_until(b'\n', &mut marker)?;
        if n == 0 {
            if let Some(declared) = self.header.frame_count {
                if self.next_index < declared {
                    return Err(FrameIoError::MissingFrames {
                        declared,
                        actual: self.next_index,
                    });
                }
            }
            return Ok(None);
        }
        if marker.last() == Some(&b'\n') {
            marker.pop();
        }
        if !marker.starts_with(b"FRAME") {
            return Err(FrameIoError::BadFrameMarker(self.next_index));
        }

        let expected = self.header.frame_len();
        let mut data = vec![0u8; expected];
        let mut got = 0;
        while got < expected {
            let n = self.reader.read(&mut data[got..])?;
            if n == 0 {
                return Err(FrameIoError::TruncatedFrame {
                    frame_index: self.next_index,
                    got,
                    expected,
                });
            }
            got += n;
        }
        let frame = Frame {
            data,
            pts_index: self.next_index,
        };
        self.next_index += 1;
        Ok(Some(frame))
    }

    /// Drains the remaining frames into a vector.
    pub fn read_all(&mut self) -> Result<Vec<Frame>, FrameIoError> {
        let mut frames = Vec::new();
        while let Some(frame) = self.read_frame()? {
            frames.push(frame);
        }
        Ok(frames)
    }
}

impl<R: Read> Iterator for Y4mReader<R> {
    type Item = Result<Frame, FrameIoError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.read_frame().transpose()
    }
}

/// y4m writer producing streams that round-trip byte-identically through
/// [`Y4mReader`]: fixed token order and a canonical chroma spelling.
pub struct Y4mWriter<W: Write> {
    writer: W,
    header: StreamHeader,
    frames_written: u64,
}

impl<W: Write> Y4mWriter<W> {
    pub fn new(mut writer: W, header: StreamHeader) -> Result<Self, FrameIoError> {
        header.validate()?;
        let chroma = match header.chroma {
            Chroma::C420 => "420jpeg",
            Chroma::C444 => "444",
        };
        write!(
            writer,
            "YUV4MPEG2 W{} H{} F{}:{} Ip A1:1 C{}",
            header.width, header.height, header.fps_num, header.fps_den, chroma
        )?;
        if let Some(n) = header.frame_count {
            write!(writer, " XFRAMES={n}")?;
        }
        writeln!(writer)?;
        Ok(Self {
            writer,
            header,
            frames_written: 0,
        })
    }

    pub fn write_frame(&mut self, frame: &Frame) -> Result<(), FrameIoError> {
        let expected = self.header.frame_len();
        if frame.data.len() != expected {
            return Err(FrameIoError::PayloadMismatch {
                got: frame.data.len(),
                expected,
            });
        }
        self.writer.write_all(b"FRAME\n")?;
        self.writer.write_all(&frame.data)?;
        self.frames_written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, FrameIoError> {
        self.writer.flush()?;
        Ok(self.writer)
    }
}

/// Serializes a whole stream to bytes.
pub fn write_y4m_bytes(header: &StreamHeader, frames: &[Frame]) -> Result<Vec<u8>, FrameIoError> {
    let mut writer = Y4mWriter::new(Vec::new(), header.clone())?;
    for frame in frames {
        writer.write_frame(frame)?;
    }
    writer.finish()
}
