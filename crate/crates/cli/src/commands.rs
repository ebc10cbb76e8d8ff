//! Stage-per-command entry points. Each command pulls manifest entries in
//! its eligible status, runs the stage, appends transitions, and is
//! idempotent: re-running without new inputs changes nothing.

use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use curator_core::frame_io::transcode::{ClipSpan, CommandTranscoder, TranscodeJob};
use curator_core::manifest::{scan_manifest, ClipStatus, ManifestStore, ScanFilter};
use curator_core::splitter::{eval_split, parse_boundary_lines};

use crate::config::Config;
use crate::services::Services;
use crate::stages::{self, TAG_DEDUP_KEPT, TAG_FILTERS_APPLIED};
use crate::CommandOutcome;

fn list_sources(input_dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut sources = Vec::new();
    let entries = std::fs::read_dir(input_dir)
        .with_context(|| format!("input directory {}", input_dir.display()))?;
    for entry in entries {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "y4m") {
            let source_id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            sources.push((source_id, path));
        }
    }
    sources.sort();
    Ok(sources)
}

pub fn cmd_split(config: &Config, boundaries_out: Option<&Path>) -> Result<CommandOutcome> {
    let mut store = ManifestStore::open(&config.paths.manifest)?;
    let sources = list_sources(&config.paths.input_dir)?;
    let mut failures = 0usize;
    let mut new_clips = 0usize;

    for (source_id, path) in sources {
        let existing = store.scan(&ScanFilter {
            source_id: Some(source_id.clone()),
            ..Default::default()
        })?;
        if !existing.entries.is_empty() {
            log::info!("{source_id}: already split ({} clips), skipping", existing.entries.len());
            continue;
        }
        match stages::split_source(config, &source_id, &path) {
            Ok(outcome) => {
                if let Some(dir) = boundaries_out {
                    stages::write_boundaries_file(
                        &dir.join(format!("{source_id}.boundaries.jsonl")),
                        &outcome.boundaries,
                    )?;
                }
                if let Some(template) = &config.transcoder.template {
                    run_external_transcode(config, template, &source_id, &path, &outcome)?;
                }
                for entry in &outcome.entries {
                    store.append(entry)?;
                    new_clips += 1;
                }
                log::info!(
                    "{source_id}: {} boundaries, {} clips",
                    outcome.boundaries.len(),
                    outcome.entries.len()
                );
            }
            Err(e) => {
                log::error!("split failed for {source_id}: {e:#}");
                failures += 1;
            }
        }
    }
    println!("split: {new_clips} new clips, {failures} failed sources");
    Ok(CommandOutcome::from_failures(failures))
}

/// Re-encodes the split clips through the configured external transcoder,
/// one batched invocation for the whole source.
fn run_external_transcode(
    config: &Config,
    template: &str,
    source_id: &str,
    input: &Path,
    outcome: &stages::SplitOutcome,
) -> Result<()> {
    let transcoder = CommandTranscoder::new(template)?;
    let encoded_dir = config.paths.workdir.join("encoded");
    std::fs::create_dir_all(&encoded_dir)?;
    let job = TranscodeJob {
        source_id: source_id.to_string(),
        input: input.to_path_buf(),
        clips: outcome
            .entries
            .iter()
            .map(|e| ClipSpan {
                start_frame: e.start_frame,
                end_frame: e.end_frame,
                output: encoded_dir.join(format!("{}.mp4", e.clip_id)),
            })
            .collect(),
    };
    let (_, report) = curator_core::frame_io::transcode::run_transcode(&[job], &transcoder)?;
    log::info!(
        "transcode {source_id}: {:.4} videos/s ({} clips)",
        report.videos_per_second,
        report.clips_completed
    );
    Ok(())
}

pub fn cmd_filter(config: &Config) -> Result<CommandOutcome> {
    let services = Services::from_config(config)?;
    let mut store = ManifestStore::open(&config.paths.manifest)?;
    let split = store.scan(&ScanFilter::status(ClipStatus::Split))?;
    let pending: Vec<_> = split
        .entries
        .into_iter()
        .filter(|e| !e.tags.contains(TAG_FILTERS_APPLIED))
        .collect();
    if pending.is_empty() {
        println!("filter: nothing to do");
        return Ok(CommandOutcome::Clean);
    }

    let mut failures = 0usize;
    let mut survivors = Vec::new();
    for mut entry in pending {
        match stages::motion_verdict(config, &entry) {
            Ok(verdict) => {
                stages::apply_verdict(&mut entry, &verdict);
                if entry.status == ClipStatus::FilteredOut {
                    store.append(&entry)?;
                } else {
                    survivors.push(entry);
                }
            }
            Err(e) => {
                log::error!("motion analysis failed for {}: {e:#}", entry.clip_id);
                failures += 1;
            }
        }
    }

    let mut inputs = Vec::new();
    for entry in survivors {
        match stages::score_clip(config, &services, &entry) {
            Ok((quality, aesthetic)) => inputs.push(stages::SelectionInput {
                entry,
                quality,
                aesthetic,
            }),
            Err(e) => {
                log::error!("scoring failed for {}: {e}", entry.clip_id);
                failures += 1;
            }
        }
    }

    let selected = stages::select_corpus(config, &services, inputs)?;
    let mut kept = 0usize;
    let mut removed = 0usize;
    for entry in &selected {
        store.append(entry)?;
        if entry.status == ClipStatus::FilteredOut {
            removed += 1;
        } else {
            kept += 1;
        }
    }
    println!("filter: {kept} kept, {removed} filtered out, {failures} failed");
    Ok(CommandOutcome::from_failures(failures))
}

pub fn cmd_annotate(config: &Config) -> Result<CommandOutcome> {
    let services = Services::from_config(config)?;
    let mut store = ManifestStore::open(&config.paths.manifest)?;
    let eligible = store.scan(&ScanFilter {
        status: Some(ClipStatus::Split),
        tag: Some(TAG_FILTERS_APPLIED.into()),
        ..Default::default()
    })?;
    if eligible.entries.is_empty() {
        println!("annotate: nothing to do");
        return Ok(CommandOutcome::Clean);
    }

    std::fs::create_dir_all(&config.paths.workdir)?;
    let mut captions_file = BufWriter::new(
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(config.paths.captions_file())?,
    );

    let mut failures = 0usize;
    let mut annotated = 0usize;
    for entry in eligible.entries {
        let outcome = stages::annotate_clip(config, &services, entry)?;
        stages::persist_captions(&mut captions_file, &outcome.captions)?;
        if outcome.failed_windows == 0 {
            store.append(&outcome.entry)?;
            annotated += 1;
        } else {
            failures += 1;
        }
    }
    println!("annotate: {annotated} clips captioned, {failures} failed");
    Ok(CommandOutcome::from_failures(failures))
}

pub fn cmd_dedup(config: &Config) -> Result<CommandOutcome> {
    let services = Services::from_config(config)?;
    let mut store = ManifestStore::open(&config.paths.manifest)?;
    let annotated = store.scan(&ScanFilter::status(ClipStatus::Annotated))?;
    if annotated.entries.is_empty() {
        anyhow::bail!(
            "nothing to deduplicate: no clips in status 'annotated'; run the annotate stage first"
        );
    }

    let outcome = stages::dedup_corpus(config, &services, annotated.entries)?;
    let mut removed = 0usize;
    let mut kept = 0usize;
    for entry in &outcome.entries {
        store.append(entry)?;
        match entry.status {
            ClipStatus::DedupedOut => removed += 1,
            _ => kept += 1,
        }
    }
    println!(
        "dedup: {kept} kept, {removed} removed (fraction {:.3}), {} failed; index at {}",
        outcome.removal_fraction,
        outcome.failed,
        config.paths.index.display()
    );
    Ok(CommandOutcome::from_failures(outcome.failed))
}

pub fn cmd_shard(config: &Config) -> Result<CommandOutcome> {
    let mut store = ManifestStore::open(&config.paths.manifest)?;
    let eligible = store.scan(&ScanFilter {
        status: Some(ClipStatus::Annotated),
        tag: Some(TAG_DEDUP_KEPT.into()),
        ..Default::default()
    })?;
    if eligible.entries.is_empty() {
        anyhow::bail!(
            "nothing to shard: no deduplicated clips; run the dedup stage first"
        );
    }

    let outcome = stages::shard_corpus(config, eligible.entries)?;
    for entry in &outcome.entries {
        store.append(entry)?;
    }
    let total_bytes: u64 = outcome.shards.iter().map(|s| s.byte_size).sum();
    println!(
        "shard: {} clips into {} shards ({} buckets, {total_bytes} bytes) under {}",
        outcome.entries.len(),
        outcome.shards.len(),
        outcome
            .shards
            .iter()
            .map(|s| s.bucket.as_str())
            .collect::<std::collections::BTreeSet<_>>()
            .len(),
        config.paths.shard_out.display()
    );
    Ok(CommandOutcome::Clean)
}

pub fn cmd_eval_split(
    config: &Config,
    pred: &Path,
    gt: &Path,
    tolerance: Option<u64>,
) -> Result<CommandOutcome> {
    let tolerance = tolerance.unwrap_or(config.splitter.eval_tolerance);
    let pred_boundaries = parse_boundary_lines(BufReader::new(
        File::open(pred).with_context(|| format!("prediction file {}", pred.display()))?,
    ))?;
    let gt_boundaries = parse_boundary_lines(BufReader::new(
        File::open(gt).with_context(|| format!("ground truth file {}", gt.display()))?,
    ))?;
    let result = eval_split(&pred_boundaries, &gt_boundaries, tolerance);
    println!("{}", serde_json::to_string(&result)?);
    Ok(CommandOutcome::Clean)
}

pub fn cmd_search(
    config: &Config,
    query_clip: Option<&str>,
    vector_file: Option<&Path>,
    top_k: usize,
) -> Result<CommandOutcome> {
    let index = curator_core::dedup::load_index(&config.paths.index)
        .with_context(|| format!("search index {}", config.paths.index.display()))?;
    let query: Vec<f32> = match (query_clip, vector_file) {
        (Some(clip_id), None) => index
            .vector_of(clip_id)
            .with_context(|| format!("clip {clip_id} is not in the index"))?
            .to_vec(),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("vector file {}", path.display()))?;
            serde_json::from_str(&text).context("vector file must be a JSON array of floats")?
        }
        _ => anyhow::bail!("exactly one of --query-clip or --vector-file is required"),
    };
    let n_probe = config.dedup.n_probe.min(index.centroids.len().max(1));
    let hits = curator_core::dedup::search(&query, &index, top_k, n_probe)?;
    println!("{}", serde_json::to_string_pretty(&hits)?);
    Ok(CommandOutcome::Clean)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_synth(
    out_dir: &Path,
    count: usize,
    width: u32,
    height: u32,
    fps: u32,
    max_cuts: usize,
    min_shot: u64,
    max_shot: u64,
    noise: u8,
    seed: u64,
) -> Result<CommandOutcome> {
    let written = stages::generate_synthetic_corpus(
        out_dir,
        count,
        width,
        height,
        (fps, 1),
        max_cuts,
        min_shot,
        max_shot,
        noise,
        seed,
    )?;
    println!(
        "synth: wrote {} videos with ground truth under {}",
        written.len(),
        out_dir.display()
    );
    Ok(CommandOutcome::Clean)
}

/// Manifest sanity summary used by tests and operators.
pub fn cmd_status(config: &Config) -> Result<CommandOutcome> {
    let scan = scan_manifest(&config.paths.manifest, &ScanFilter::default())?;
    let mut by_status: std::collections::BTreeMap<String, usize> = Default::default();
    for entry in &scan.entries {
        *by_status
            .entry(format!("{:?}", entry.status).to_lowercase())
            .or_default() += 1;
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({
            "clips": scan.entries.len(),
            "by_status": by_status,
            "corrupt_lines": scan.corrupt_lines,
        }))?
    );
    Ok(CommandOutcome::Clean)
}
