//! Output packaging: bucket assignment and tar shard writing.

mod bucket;
mod tar;
mod writer;

pub use bucket::{assign_bucket, AspectBucket, Bucket, LengthTier, ResolutionTier};
pub use tar::{read_tar, TarEntry, TarWriter};
pub use writer::{
    write_shard_index, write_shards, ShardEntryRef, ShardIndex, ShardItem, ShardSpec,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ShardError {
    #[error("duration {0}s outside the 2-60s clip domain")]
    InvalidDuration(f64),
    #[error("payload missing for clip {0}")]
    PayloadMissing(String),
    #[error("tar member name too long: {0}")]
    NameTooLong(String),
    #[error("tar archive corrupt: {0}")]
    Corrupt(String),
    #[error("unknown bucket label: {0}")]
    BadBucketLabel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
