//! The persistent clip database.
//!
//! An append-only, line-delimited JSON file. The latest record for a clip
//! id wins on scan; corrupt lines are skipped, counted and logged. The
//! store handle is the single writer; scans can run concurrently from the
//! path.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("invalid status transition for {clip_id}: {from:?} -> {to:?}")]
    InvalidTransition {
        clip_id: String,
        from: ClipStatus,
        to: ClipStatus,
    },
    #[error("entry for {0} is terminal ({1:?}) but carries no reason")]
    MissingReason(String, ClipStatus),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("serialize: {0}")]
    Serialize(#[from] serde_json::Error),
}

/// Lifecycle of a clip through the pipeline. `Split -> Annotated ->
/// Sharded` for survivors; `FilteredOut` and `DedupedOut` are terminal side
/// exits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipStatus {
    Split,
    FilteredOut,
    Annotated,
    DedupedOut,
    Sharded,
}

impl ClipStatus {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            ClipStatus::FilteredOut | ClipStatus::DedupedOut | ClipStatus::Sharded
        )
    }

    /// Forward-only transitions along the pipeline order. Re-appending the
    /// same non-terminal status is allowed (stages enrich entries in place).
    pub fn can_transition(from: ClipStatus, to: ClipStatus) -> bool {
        match (from, to) {
            (a, b) if a == b => !a.is_terminal(),
            (ClipStatus::Split, ClipStatus::FilteredOut | ClipStatus::Annotated) => true,
            (ClipStatus::Annotated, ClipStatus::DedupedOut | ClipStatus::Sharded) => true,
            _ => false,
        }
    }
}

/// One clip database row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub clip_id: String,
    pub source_id: String,
    pub start_frame: u64,
    pub end_frame: u64,
    pub fps_num: u32,
    pub fps_den: u32,
    pub width: u32,
    pub height: u32,
    pub status: ClipStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub scores: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub tags: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub caption_refs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bucket: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shard_ref: Option<String>,
}

impl ManifestEntry {
    pub fn frame_count(&self) -> u64 {
        self.end_frame - self.start_frame
    }

    pub fn duration_seconds(&self) -> f64 {
        self.frame_count() as f64 * self.fps_den as f64 / self.fps_num as f64
    }
}

/// Filter for [`scan_manifest`]. Empty filter matches everything.
#[derive(Debug, Clone, Default)]
pub struct ScanFilter {
    pub status: Option<ClipStatus>,
    pub bucket: Option<String>,
    pub tag: Option<String>,
    pub source_id: Option<String>,
}

impl ScanFilter {
    pub fn status(status: ClipStatus) -> Self {
        Self {
            status: Some(status),
            ..Default::default()
        }
    }

    fn matches(&self, entry: &ManifestEntry) -> bool {
        self.status.map_or(true, |s| entry.status == s)
            && self.bucket.as_ref().map_or(true, |b| {
                entry.bucket.as_deref() == Some(b.as_str())
            })
            && self.tag.as_ref().map_or(true, |t| entry.tags.contains(t))
            && self
                .source_id
                .as_ref()
                .map_or(true, |s| &entry.source_id == s)
    }
}

#[derive(Debug)]
pub struct ScanResult {
    /// Latest entry per clip id, sorted by clip id.
    pub entries: Vec<ManifestEntry>,
    pub corrupt_lines: u64,
}

/// Replays the file and returns the latest matching entry per clip.
pub fn scan_manifest(path: &Path, filter: &ScanFilter) -> Result<ScanResult, ManifestError> {
    let mut latest: BTreeMap<String, ManifestEntry> = BTreeMap::new();
    let mut corrupt_lines = 0u64;
    if path.exists() {
        let reader = BufReader::new(File::open(path)?);
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<ManifestEntry>(&line) {
                Ok(entry) => {
                    latest.insert(entry.clip_id.clone(), entry);
                }
                Err(e) => {
                    corrupt_lines += 1;
                    log::warn!("manifest {}: corrupt line {}: {e}", path.display(), lineno + 1);
                }
            }
        }
    }
    Ok(ScanResult {
        entries: latest.into_values().filter(|e| filter.matches(e)).collect(),
        corrupt_lines,
    })
}

/// Single-writer handle over the manifest file.
pub struct ManifestStore {
    path: PathBuf,
    writer: BufWriter<File>,
    latest_status: HashMap<String, ClipStatus>,
}

impl ManifestStore {
    /// Opens (or creates) the manifest, replaying it to learn each clip's
    /// current status for transition checking.
    pub fn open(path: &Path) -> Result<Self, ManifestError> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let mut latest_status = HashMap::new();
        if path.exists() {
            for entry in scan_manifest(path, &ScanFilter::default())?.entries {
                latest_status.insert(entry.clip_id, entry.status);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            writer: BufWriter::new(file),
            latest_status,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn status_of(&self, clip_id: &str) -> Option<ClipStatus> {
        self.latest_status.get(clip_id).copied()
    }

    /// Appends one entry, enforcing forward-only transitions and the
    /// reason-on-terminal-exit invariant.
    pub fn append(&mut self, entry: &ManifestEntry) -> Result<(), ManifestError> {
        if matches!(
            entry.status,
            ClipStatus::FilteredOut | ClipStatus::DedupedOut
        ) && entry.reason.is_none()
        {
            return Err(ManifestError::MissingReason(
                entry.clip_id.clone(),
                entry.status,
            ));
        }
        if let Some(&from) = self.latest_status.get(&entry.clip_id) {
            if !ClipStatus::can_transition(from, entry.status) {
                return Err(ManifestError::InvalidTransition {
                    clip_id: entry.clip_id.clone(),
                    from,
                    to: entry.status,
                });
            }
        }
        serde_json::to_writer(&mut self.writer, entry)?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        self.latest_status
            .insert(entry.clip_id.clone(), entry.status);
        Ok(())
    }

    pub fn scan(&self, filter: &ScanFilter) -> Result<ScanResult, ManifestError> {
        scan_manifest(&self.path, filter)
    }
}
