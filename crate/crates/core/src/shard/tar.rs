//! Minimal POSIX ustar writer and reader.
//!
//! Shards require nothing beyond regular-file members with short names, so
//! the 512-byte ustar header is written directly. Timestamps and ownership
//! are zeroed to keep archives byte-deterministic.

use std::io::{Read, Write};

use super::ShardError;

const BLOCK: usize = 512;

fn octal_field(dst: &mut [u8], value: u64) {
    // Width minus one digits, NUL terminated, zero padded.
    let s = format!("{value:0width$o}\0", width = dst.len() - 1);
    dst.copy_from_slice(s.as_bytes());
}

fn build_header(name: &str, size: u64) -> Result<[u8; BLOCK], ShardError> {
    if name.len() > 100 {
        return Err(ShardError::NameTooLong(name.to_string()));
    }
    let mut header = [0u8; BLOCK];
    header[..name.len()].copy_from_slice(name.as_bytes());
    octal_field(&mut header[100..108], 0o644); // mode
    octal_field(&mut header[108..116], 0); // uid
    octal_field(&mut header[116..124], 0); // gid
    octal_field(&mut header[124..136], size);
    octal_field(&mut header[136..148], 0); // mtime
    header[148..156].fill(b' '); // checksum placeholder
    header[156] = b'0'; // typeflag: regular file
    header[257..263].copy_from_slice(b"ustar\0");
    header[263..265].copy_from_slice(b"00");
    let checksum: u64 = header.iter().map(|&b| u64::from(b)).sum();
    let checksum_text = format!("{checksum:06o}\0 ");
    header[148..156].copy_from_slice(checksum_text.as_bytes());
    Ok(header)
}

fn padding(size: u64) -> usize {
    (BLOCK - (size as usize % BLOCK)) % BLOCK
}

/// Byte length a member occupies in the archive: header plus padded data.
pub fn member_len(data_len: u64) -> u64 {
    BLOCK as u64 + data_len + padding(data_len) as u64
}

/// Byte length of the end-of-archive trailer.
pub const TRAILER_LEN: u64 = 2 * BLOCK as u64;

/// Streaming tar writer tracking its own offset.
pub struct TarWriter<W: Write> {
    writer: W,
    offset: u64,
}

impl<W: Write> TarWriter<W> {
    pub fn new(writer: W) -> Self {
        Self { writer, offset: 0 }
    }

    /// Appends one regular file, returning the archive offset of its header.
    pub fn append(&mut self, name: &str, data: &[u8]) -> Result<u64, ShardError> {
        let header = build_header(name, data.len() as u64)?;
        let start = self.offset;
        self.writer.write_all(&header)?;
        self.writer.write_all(data)?;
        let pad = padding(data.len() as u64);
        if pad > 0 {
            self.writer.write_all(&vec![0u8; pad])?;
        }
        self.offset += member_len(data.len() as u64);
        Ok(start)
    }

    /// Writes the end-of-archive blocks and returns the total size.
    pub fn finish(mut self) -> Result<(W, u64), ShardError> {
        self.writer.write_all(&[0u8; 2 * BLOCK])?;
        self.offset += TRAILER_LEN;
        self.writer.flush()?;
        Ok((self.writer, self.offset))
    }
}

/// One extracted archive member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TarEntry {
    pub name: String,
    pub offset: u64,
    pub data: Vec<u8>,
}

/// Reads every member of a ustar archive.
pub fn read_tar<R: Read>(mut reader: R) -> Result<Vec<TarEntry>, ShardError> {
    let mut entries = Vec::new();
    let mut offset = 0u64;
    loop {
        let mut header = [0u8; BLOCK];
        if let Err(e) = reader.read_exact(&mut header) {
            if e.kind() == std::io::ErrorKind::UnexpectedEof && entries.is_empty() {
                return Err(ShardError::Corrupt("empty archive".into()));
            }
            return Err(ShardError::Corrupt(format!("short header read: {e}")));
        }
        if header.iter().all(|&b| b == 0) {
            break; // end-of-archive marker
        }
        let name_end = header[..100]
            .iter()
            .position(|&b| b == 0)
            .unwrap_or(100);
        let name = std::str::from_utf8(&header[..name_end])
            .map_err(|_| ShardError::Corrupt("member name is not utf-8".into()))?
            .to_string();
        let size_text = std::str::from_utf8(&header[124..136])
            .map_err(|_| ShardError::Corrupt("size field is not utf-8".into()))?
            .trim_end_matches(['\0', ' '])
            .trim();
        let size = u64::from_str_radix(size_text, 8)
            .map_err(|_| ShardError::Corrupt(format!("bad size field {size_text:?}")))?;

        let mut expected = header;
        expected[148..156].fill(b' ');
        let want: u64 = expected.iter().map(|&b| u64::from(b)).sum();
        let got_text = std::str::from_utf8(&header[148..156])
            .map_err(|_| ShardError::Corrupt("checksum field is not utf-8".into()))?
            .trim_end_matches(['\0', ' '])
            .trim();
        let got = u64::from_str_radix(got_text, 8)
            .map_err(|_| ShardError::Corrupt("bad checksum field".into()))?;
        if got != want {
            return Err(ShardError::Corrupt(format!(
                "checksum mismatch for {name}: {got:o} != {want:o}"
            )));
        }

        let mut data = vec![0u8; size as usize];
        reader
            .read_exact(&mut data)
            .map_err(|e| ShardError::Corrupt(format!("short data read for {name}: {e}")))?;
        let pad = padding(size);
        if pad > 0 {
            let mut skip = vec![0u8; pad];
            reader
                .read_exact(&mut skip)
                .map_err(|e| ShardError::Corrupt(format!("short padding read: {e}")))?;
        }
        entries.push(TarEntry { name, offset, data });
        offset += member_len(size);
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_read_round_trip() {
        let mut writer = TarWriter::new(Vec::new());
        let off_a = writer.append("a.json", b"{\"k\":1}").unwrap();
        let off_b = writer.append("a.y4m", &[7u8; 1000]).unwrap();
        let (bytes, total) = writer.finish().unwrap();
        assert_eq!(total as usize, bytes.len());
        assert_eq!(off_a, 0);
        assert_eq!(off_b, 512 + 512); // header + one padded block

        let entries = read_tar(&bytes[..]).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].name, "a.json");
        assert_eq!(entries[0].data, b"{\"k\":1}");
        assert_eq!(entries[1].name, "a.y4m");
        assert_eq!(entries[1].data, vec![7u8; 1000]);
        assert_eq!(entries[1].offset, off_b);
    }

    #[test]
    fn empty_payload_member() {
        let mut writer = TarWriter::new(Vec::new());
        writer.append("empty.json", b"").unwrap();
        let (bytes, _) = writer.finish().unwrap();
        let entries = read_tar(&bytes[..]).unwrap();
        assert_eq!(entries[0].data.len(), 0);
    }

    #[test]
    fn over_long_name_rejected() {
        let mut writer = TarWriter::new(Vec::new());
        let name = "x".repeat(101);
        assert!(matches!(
            writer.append(&name, b"data"),
            Err(ShardError::NameTooLong(_))
        ));
    }

    #[test]
    fn corrupted_checksum_detected() {
        let mut writer = TarWriter::new(Vec::new());
        writer.append("a.json", b"payload").unwrap();
        let (mut bytes, _) = writer.finish().unwrap();
        bytes[0] ^= 0xff;
        assert!(matches!(read_tar(&bytes[..]), Err(ShardError::Corrupt(_))));
    }

    #[test]
    fn archive_size_matches_member_len_arithmetic() {
        let sizes = [0u64, 1, 511, 512, 513, 10_000];
        let mut writer = TarWriter::new(Vec::new());
        for (i, &s) in sizes.iter().enumerate() {
            writer.append(&format!("f{i}"), &vec![0u8; s as usize]).unwrap();
        }
        let (bytes, total) = writer.finish().unwrap();
        let expected: u64 = sizes.iter().map(|&s| member_len(s)).sum::<u64>() + TRAILER_LEN;
        assert_eq!(total, expected);
        assert_eq!(bytes.len() as u64, expected);
    }
}
