//! Binary persistence for [`VectorIndex`].
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  "CVIX"
//! version u8       1
//! dim     u32
//! k       u32      centroid count
//! n       u32      item count
//! seed    u64
//! inertia f64
//! iters   u32
//! centroids  k * dim * f32
//! items      n * { cluster u32, id_len u32, id bytes, vector dim * f32 }
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DedupError, VectorIndex};

const MAGIC: &[u8; 4] = b"CVIX";
const VERSION: u8 = 1;

pub fn save_index(path: &Path, index: &VectorIndex) -> Result<(), DedupError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    w.write_all(&(index.dim as u32).to_le_bytes())?;
    w.write_all(&(index.centroids.len() as u32).to_le_bytes())?;
    w.write_all(&(index.items.len() as u32).to_le_bytes())?;
    w.write_all(&index.seed.to_le_bytes())?;
    w.write_all(&index.inertia.to_le_bytes())?;
    w.write_all(&index.iterations.to_le_bytes())?;
    for centroid in &index.centroids {
        debug_assert_eq!(centroid.len(), index.dim);
        for &x in centroid {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    for (clip_id, cluster, vector) in &index.items {
        w.write_all(&cluster.to_le_bytes())?;
        w.write_all(&(clip_id.len() as u32).to_le_bytes())?;
        w.write_all(clip_id.as_bytes())?;
        debug_assert_eq!(vector.len(), index.dim);
        for &x in vector {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N], DedupError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|_| DedupError::Corrupt("unexpected end of file".into()))?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, DedupError> {
    Ok(u32::from_le_bytes(read_exact::<R, 4>(r)?))
}

fn read_f32_vec<R: Read>(r: &mut R, len: usize) -> Result<Vec<f32>, DedupError> {
    let mut bytes = vec![0u8; len * 4];
    r.read_exact(&mut bytes)
        .map_err(|_| DedupError::Corrupt("truncated vector block".into()))?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn load_index(path: &Path) -> Result<VectorIndex, DedupError> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = read_exact::<_, 4>(&mut r)?;
    if &magic != MAGIC {
        return Err(DedupError::Corrupt("bad magic".into()));
    }
    let [version] = read_exact::<_, 1>(&mut r)?;
    if version != VERSION {
        return Err(DedupError::Corrupt(format!(
            "unsupported index version {version}"
        )));
    }
    let dim = read_u32(&mut r)? as usize;
    let k = read_u32(&mut r)? as usize;
    let n = read_u32(&mut r)? as usize;
    let seed = u64::from_le_bytes(read_exact::<_, 8>(&mut r)?);
    let inertia = f64::from_le_bytes(read_exact::<_, 8>(&mut r)?);
    let iterations = read_u32(&mut r)?;

    let mut centroids = Vec::with_capacity(k);
    for _ in 0..k {
        centroids.push(read_f32_vec(&mut r, dim)?);
    }
    let mut items = Vec::with_capacity(n);
    for _ in 0..n {
        let cluster = read_u32(&mut r)?;
        if cluster as usize >= k {
            return Err(DedupError::Corrupt(format!(
                "cluster {cluster} out of range (k={k})"
            )));
        }
        let id_len = read_u32(&mut r)? as usize;
        if id_len > 4096 {
            return Err(DedupError::Corrupt(format!("clip id length {id_len}")));
        }
        let mut id_bytes = vec![0u8; id_len];
        r.read_exact(&mut id_bytes)
            .map_err(|_| DedupError::Corrupt("truncated clip id".into()))?;
        let clip_id = String::from_utf8(id_bytes)
            .map_err(|_| DedupError::Corrupt("clip id is not utf-8".into()))?;
        let vector = read_f32_vec(&mut r, dim)?;
        items.push((clip_id, cluster, vector));
    }
    Ok(VectorIndex {
        dim,
        centroids,
        items,
        seed,
        inertia,
        iterations,
    })
}
