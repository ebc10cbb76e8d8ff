//! Shard packaging.
//!
//! Clips of one bucket are packed into tar shards under
//! `{out_dir}/{bucket}/shard-%06d.tar`. Each clip contributes two adjacent
//! members sharing a basename — `{clip_id}.json` (metadata) then
//! `{clip_id}.y4m` (frames) — the grouping convention downstream sample
//! loaders rely on. A shard closes when the next clip would push it past
//! `max_bytes`; a single clip larger than the limit still gets its own
//! shard, with a warning.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::tar::{member_len, TarWriter, TRAILER_LEN};
use super::{Bucket, ShardError};

/// One clip's payloads, ready to pack.
#[derive(Debug, Clone)]
pub struct ShardItem {
    pub clip_id: String,
    pub metadata_json: Vec<u8>,
    pub frames: Vec<u8>,
}

impl ShardItem {
    /// Archive bytes this item will occupy (two members).
    fn packed_len(&self) -> u64 {
        member_len(self.metadata_json.len() as u64) + member_len(self.frames.len() as u64)
    }
}

/// Location of one clip inside a shard: offset of its metadata member's
/// header and the total length of both members.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardEntryRef {
    pub clip_id: String,
    pub offset: u64,
    pub length: u64,
}

/// One written shard.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShardSpec {
    pub path: PathBuf,
    pub bucket: String,
    pub shard_index: u32,
    pub entries: Vec<ShardEntryRef>,
    pub byte_size: u64,
}

/// Index document listing every shard and its entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShardIndex {
    pub shards: Vec<ShardIndexShard>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShardIndexShard {
    pub path: String,
    pub bucket: String,
    pub entries: Vec<ShardEntryRef>,
}

struct OpenShard {
    writer: TarWriter<BufWriter<File>>,
    path: PathBuf,
    index: u32,
    entries: Vec<ShardEntryRef>,
    payload_bytes: u64,
}

/// Packs `items` (all of one bucket) into shards under `out_dir`.
pub fn write_shards<I>(
    bucket: &Bucket,
    items: I,
    max_bytes: u64,
    out_dir: &Path,
) -> Result<Vec<ShardSpec>, ShardError>
where
    I: IntoIterator<Item = ShardItem>,
{
    let bucket_label = bucket.to_string();
    let bucket_dir = out_dir.join(&bucket_label);
    std::fs::create_dir_all(&bucket_dir)?;

    let mut specs: Vec<ShardSpec> = Vec::new();
    let mut open: Option<OpenShard> = None;
    let mut next_index = 0u32;

    let close = |shard: OpenShard, specs: &mut Vec<ShardSpec>| -> Result<(), ShardError> {
        let (_, byte_size) = shard.writer.finish()?;
        specs.push(ShardSpec {
            path: shard.path,
            bucket: bucket_label.clone(),
            shard_index: shard.index,
            entries: shard.entries,
            byte_size,
        });
        Ok(())
    };

    for item in items {
        let item_len = item.packed_len();
        if let Some(shard) = open.take() {
            if shard.payload_bytes + item_len + TRAILER_LEN > max_bytes {
                close(shard, &mut specs)?;
            } else {
                open = Some(shard);
            }
        }
        let shard = match open.as_mut() {
            Some(shard) => shard,
            None => {
                if item_len + TRAILER_LEN > max_bytes {
                    log::warn!(
                        "clip {} ({item_len} bytes) exceeds max shard size {max_bytes}; writing oversize shard",
                        item.clip_id
                    );
                }
                let path = bucket_dir.join(format!("shard-{next_index:06}.tar"));
                let file = File::create(&path)?;
                open = Some(OpenShard {
                    writer: TarWriter::new(BufWriter::new(file)),
                    path,
                    index: next_index,
                    entries: Vec::new(),
                    payload_bytes: 0,
                });
                next_index += 1;
                open.as_mut().expect("just opened")
            }
        };

        let offset = shard
            .writer
            .append(&format!("{}.json", item.clip_id), &item.metadata_json)?;
        shard
            .writer
            .append(&format!("{}.y4m", item.clip_id), &item.frames)?;
        shard.entries.push(ShardEntryRef {
            clip_id: item.clip_id,
            offset,
            length: item_len,
        });
        shard.payload_bytes += item_len;
    }
    if let Some(shard) = open {
        close(shard, &mut specs)?;
    }
    Ok(specs)
}

/// Writes the aggregate shard index JSON.
pub fn write_shard_index(path: &Path, shards: &[ShardSpec]) -> Result<(), ShardError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let index = ShardIndex {
        shards: shards
            .iter()
            .map(|s| ShardIndexShard {
                path: s.path.to_string_lossy().into_owned(),
                bucket: s.bucket.clone(),
                entries: s.entries.clone(),
            })
            .collect(),
    };
    let file = File::create(path)?;
    serde_json::to_writer_pretty(BufWriter::new(file), &index)
        .map_err(|e| ShardError::Corrupt(format!("index serialize: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shard::read_tar;

    fn bucket() -> Bucket {
        crate::shard::assign_bucket(640, 480, 5.0).unwrap()
    }

    fn item(clip_id: &str, frame_bytes: usize) -> ShardItem {
        ShardItem {
            clip_id: clip_id.to_string(),
            metadata_json: format!("{{\"clip_id\":\"{clip_id}\"}}").into_bytes(),
            frames: vec![0xAB; frame_bytes],
        }
    }

    #[test]
    fn greedy_close_rule_packs_two_then_one() {
        let dir = tempfile::tempdir().unwrap();
        // ~1 MB items against a 2.5 MB cap: two fit, the third starts a new shard.
        let items = vec![
            item("a", 1_000_000),
            item("b", 1_000_000),
            item("c", 1_000_000),
        ];
        let specs = write_shards(&bucket(), items, 2_500_000, dir.path()).unwrap();
        assert_eq!(specs.len(), 2);
        assert_eq!(specs[0].entries.len(), 2);
        assert_eq!(specs[1].entries.len(), 1);
        assert!(specs.iter().all(|s| s.byte_size <= 2_500_000));
        assert_eq!(specs[0].shard_index, 0);
        assert_eq!(specs[1].shard_index, 1);
        assert!(specs[0].path.ends_with("4x3_sd_short/shard-000000.tar"));
    }

    #[test]
    fn oversize_clip_gets_its_own_shard() {
        let dir = tempfile::tempdir().unwrap();
        let specs = write_shards(&bucket(), vec![item("big", 100_000)], 10_000, dir.path()).unwrap();
        assert_eq!(specs.len(), 1);
        assert_eq!(specs[0].entries.len(), 1);
        assert!(specs[0].byte_size > 10_000);
    }

    #[test]
    fn read_back_is_payload_identical_and_grouped() {
        let dir = tempfile::tempdir().unwrap();
        let items = vec![item("clip_a", 5000), item("clip_b", 3000)];
        let specs = write_shards(&bucket(), items.clone(), 1 << 30, dir.path()).unwrap();
        assert_eq!(specs.len(), 1);

        let bytes = std::fs::read(&specs[0].path).unwrap();
        let entries = read_tar(&bytes[..]).unwrap();
        assert_eq!(entries.len(), 4);
        // Basename grouping: metadata immediately before frames.
        for (i, original) in items.iter().enumerate() {
            assert_eq!(entries[2 * i].name, format!("{}.json", original.clip_id));
            assert_eq!(entries[2 * i].data, original.metadata_json);
            assert_eq!(entries[2 * i + 1].name, format!("{}.y4m", original.clip_id));
            assert_eq!(entries[2 * i + 1].data, original.frames);
        }
        // Entry refs point at the metadata member.
        for (entry_ref, tar_entry) in specs[0].entries.iter().zip(entries.chunks(2)) {
            assert_eq!(entry_ref.offset, tar_entry[0].offset);
        }
    }

    #[test]
    fn index_json_lists_every_entry() {
        let dir = tempfile::tempdir().unwrap();
        let specs = write_shards(
            &bucket(),
            vec![item("a", 100), item("b", 100)],
            1 << 30,
            dir.path(),
        )
        .unwrap();
        let index_path = dir.path().join("index.json");
        write_shard_index(&index_path, &specs).unwrap();
        let text = std::fs::read_to_string(&index_path).unwrap();
        let parsed: ShardIndex = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed.shards.len(), 1);
        assert_eq!(parsed.shards[0].entries.len(), 2);
        assert_eq!(parsed.shards[0].bucket, "4x3_sd_short");
        assert_eq!(parsed.shards[0].entries[0].clip_id, "a");
    }
}
