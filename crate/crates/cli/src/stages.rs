//! Stage implementations shared by the per-stage commands and `run`.
//!
//! Each function takes manifest entries in the stage's eligible status,
//! does the work, and returns the updated entries plus failure counts; the
//! callers append results to the manifest. Clip frames live as standalone
//! y4m files under the workdir, written once at split time.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

use curator_core::annotate::{
    build_caption_request, caption_corpus, window_clip, CaptionRequest, RetryPolicy,
};
use curator_core::client::ClientError;
use curator_core::dedup::{
    dedup, embed_corpus, kmeans_fit, save_index, DedupItem, Embedding, VectorIndex,
};
use curator_core::filters::{
    aesthetic_gate, classify_motion, estimate_flow_block, motion_stats, percentile_cut,
    resample_weights, FilterVerdict, MlpWeights, RejectReason,
};
use curator_core::frame_io::{
    resize_rgb_nearest, sample_uniform_frames, Frame, StreamHeader, Y4mReader, Y4mWriter,
};
use curator_core::manifest::{ClipStatus, ManifestEntry};
use curator_core::shard::{assign_bucket, write_shard_index, write_shards, ShardItem, ShardSpec};
use curator_core::splitter::{apply_clip_rules, detect_shots_histogram, Clip, ShotBoundary};
use curator_core::synth;

use crate::config::Config;
use crate::services::Services;

/// Tag marking an entry that has passed the whole filtering stage.
pub const TAG_FILTERS_APPLIED: &str = "filters_applied";
/// Tag marking a dedup survivor.
pub const TAG_DEDUP_KEPT: &str = "dedup_kept";

pub fn clip_id_for(source_id: &str, clip: &Clip) -> String {
    format!("{source_id}_{:07}_{:07}", clip.start_frame, clip.end_frame)
}

// ---------------------------------------------------------------------------
// Split

pub struct SplitOutcome {
    pub entries: Vec<ManifestEntry>,
    pub boundaries: Vec<ShotBoundary>,
    pub header: StreamHeader,
}

/// Detects shots in one source video, applies the clip rules, and writes
/// each kept clip as a standalone y4m file under the workdir.
pub fn split_source(config: &Config, source_id: &str, path: &Path) -> Result<SplitOutcome> {
    let splitter = &config.splitter;

    // Pass 1: streaming detection.
    let mut reader = Y4mReader::new(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))?;
    let header = reader.header().clone();
    let mut stream_len = 0u64;
    let mut read_error = None;
    let boundaries = {
        let frames = std::iter::from_fn(|| match reader.read_frame() {
            Ok(Some(frame)) => {
                stream_len += 1;
                Some(frame)
            }
            Ok(None) => None,
            Err(e) => {
                read_error = Some(e);
                None
            }
        });
        detect_shots_histogram(
            frames,
            &header,
            splitter.tau,
            splitter.min_scene_len,
            splitter.bins,
        )
    };
    if let Some(e) = read_error {
        return Err(e).with_context(|| format!("reading {}", path.display()));
    }

    let cut_indices: Vec<u64> = boundaries.iter().map(|b| b.frame_index).collect();
    let clips = apply_clip_rules(
        &cut_indices,
        stream_len,
        (header.fps_num, header.fps_den),
        source_id,
    );

    // Pass 2: write clip files (ranges are sorted and disjoint).
    std::fs::create_dir_all(config.paths.clips_dir())?;
    let mut reader = Y4mReader::new(BufReader::new(File::open(path)?))?;
    let mut entries = Vec::with_capacity(clips.len());
    let mut clip_iter = clips.iter().peekable();
    let mut writer: Option<(u64, Y4mWriter<BufWriter<File>>)> = None;
    while let Some(frame) = reader.read_frame()? {
        let index = frame.pts_index;
        if let Some((end, _)) = &writer {
            if index >= *end {
                let (_, w) = writer.take().expect("open writer");
                w.finish()?;
            }
        }
        if writer.is_none() {
            if let Some(clip) = clip_iter.peek() {
                if index >= clip.start_frame {
                    let clip = clip_iter.next().expect("peeked");
                    let clip_id = clip_id_for(source_id, clip);
                    let mut clip_header = header.clone();
                    clip_header.frame_count = Some(clip.frame_count());
                    let file = File::create(config.paths.clip_file(&clip_id))?;
                    let w = Y4mWriter::new(BufWriter::new(file), clip_header)?;
                    writer = Some((clip.end_frame, w));
                    entries.push(entry_for(clip, &clip_id, &header));
                }
            }
        }
        if let Some((_, w)) = writer.as_mut() {
            w.write_frame(&frame)?;
        }
    }
    if let Some((_, w)) = writer.take() {
        w.finish()?;
    }

    Ok(SplitOutcome {
        entries,
        boundaries,
        header,
    })
}

fn entry_for(clip: &Clip, clip_id: &str, header: &StreamHeader) -> ManifestEntry {
    ManifestEntry {
        clip_id: clip_id.to_string(),
        source_id: clip.source_id.clone(),
        start_frame: clip.start_frame,
        end_frame: clip.end_frame,
        fps_num: clip.fps_num,
        fps_den: clip.fps_den,
        width: header.width,
        height: header.height,
        status: ClipStatus::Split,
        reason: None,
        scores: BTreeMap::new(),
        tags: Default::default(),
        caption_refs: Vec::new(),
        embedding_ref: None,
        bucket: None,
        shard_ref: None,
    }
}

/// Writes detected boundaries as line-delimited `{"frame": n}` JSON.
pub fn write_boundaries_file(path: &Path, boundaries: &[ShotBoundary]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = BufWriter::new(File::create(path)?);
    for boundary in boundaries {
        writeln!(file, "{{\"frame\": {}}}", boundary.frame_index)?;
    }
    file.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Frame access helpers

fn read_clip_frames(config: &Config, clip_id: &str) -> Result<(StreamHeader, Vec<Frame>)> {
    let path = config.paths.clip_file(clip_id);
    let mut reader = Y4mReader::new(BufReader::new(
        File::open(&path).with_context(|| format!("clip payload {}", path.display()))?,
    ))?;
    let header = reader.header().clone();
    let frames = reader.read_all()?;
    Ok((header, frames))
}

/// 8 uniformly sampled frames as 224x224 RGB payloads, the wire format the
/// scorer/captioner/embedder services expect.
pub fn service_frames(config: &Config, clip_id: &str) -> Result<Vec<Vec<u8>>, ClientError> {
    let (header, frames) =
        read_clip_frames(config, clip_id).map_err(|e| ClientError::Unavailable(e.to_string()))?;
    let picks = sample_uniform_frames(frames.len() as u64, 8);
    Ok(picks
        .into_iter()
        .map(|i| {
            let rgb = frames[i as usize].to_rgb(&header);
            resize_rgb_nearest(&rgb, header.width, header.height, 224, 224)
        })
        .collect())
}

/// The frames named by a caption request (clip-relative indices), resized
/// to the service payload format.
pub fn request_frames(
    config: &Config,
    request: &CaptionRequest,
) -> Result<Vec<Vec<u8>>, ClientError> {
    let (header, frames) = read_clip_frames(config, &request.clip_id)
        .map_err(|e| ClientError::Unavailable(e.to_string()))?;
    request
        .frame_indices
        .iter()
        .map(|&i| {
            let frame = frames.get(i as usize).ok_or_else(|| {
                ClientError::Unavailable(format!(
                    "frame {i} out of range for {}",
                    request.clip_id
                ))
            })?;
            let rgb = frame.to_rgb(&header);
            Ok(resize_rgb_nearest(&rgb, header.width, header.height, 224, 224))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Motion filtering

/// Runs block-matching flow over sampled frame pairs and classifies the
/// clip's motion.
pub fn motion_verdict(config: &Config, entry: &ManifestEntry) -> Result<FilterVerdict> {
    let (header, frames) = read_clip_frames(config, &entry.clip_id)?;
    if frames.len() < 2 {
        bail!("clip {} has fewer than 2 frames", entry.clip_id);
    }
    let pair_count = config.filters.flow_pairs.min(frames.len() - 1);
    let starts = sample_uniform_frames(frames.len() as u64 - 1, pair_count);
    let mut fields = Vec::with_capacity(starts.len());
    for start in starts {
        let a = &frames[start as usize];
        let b = &frames[start as usize + 1];
        fields.push(estimate_flow_block(
            a,
            b,
            &header,
            config.filters.flow_block,
            config.filters.flow_radius,
        )?);
    }
    let stats = motion_stats(&fields, config.filters.motion.confidence_floor);
    Ok(classify_motion(&entry.clip_id, &stats, &config.filters.motion))
}

/// Applies a verdict to an entry: merge scores/tags, and flip to
/// `FilteredOut` with the verdict's reason when it failed.
pub fn apply_verdict(entry: &mut ManifestEntry, verdict: &FilterVerdict) {
    entry.scores.extend(verdict.scores.clone());
    entry.tags.extend(verdict.tags.iter().cloned());
    if !verdict.pass {
        entry.status = ClipStatus::FilteredOut;
        entry.reason = Some(
            verdict
                .reason
                .map(|r| format!("{r:?}").to_lowercase())
                .unwrap_or_else(|| "filtered".into()),
        );
    }
}

// ---------------------------------------------------------------------------
// Corpus selection (quality percentile + aesthetic gate + overlay MLP)

pub struct SelectionInput {
    pub entry: ManifestEntry,
    pub quality: f64,
    pub aesthetic: f64,
}

/// Scores one clip with the quality and aesthetic services.
pub fn score_clip(
    config: &Config,
    services: &Services,
    entry: &ManifestEntry,
) -> Result<(f64, f64), ClientError> {
    let frames = service_frames(config, &entry.clip_id)?;
    let quality = services.quality.score(&entry.clip_id, &frames)?;
    let aesthetic = services.aesthetic.score(&entry.clip_id, &frames)?;
    Ok((quality, aesthetic))
}

/// Corpus-level selection over scored survivors of motion filtering:
/// removes the bottom quality percentile, gates on the aesthetic
/// threshold, then (if configured) the text-overlay classifier and
/// category resampling. Returns the entries with their final status and
/// scores.
pub fn select_corpus(
    config: &Config,
    services: &Services,
    mut inputs: Vec<SelectionInput>,
) -> Result<Vec<ManifestEntry>> {
    let fraction = config.effective_percentile_fraction();
    let scored: Vec<(String, f64)> = inputs
        .iter()
        .map(|i| (i.entry.clip_id.clone(), i.quality))
        .collect();
    let cut = percentile_cut(&scored, fraction);

    let overlay = load_mlp(config.filters.mlp_weights.as_deref())?;
    let taxonomy = load_mlp(config.filters.taxonomy_weights.as_deref())?;
    let acceptance = category_acceptance(config, services, &inputs, taxonomy.as_ref())?;

    let aesthetic_threshold = config.effective_aesthetic_threshold();
    let mut out = Vec::with_capacity(inputs.len());
    for input in inputs.drain(..) {
        let mut entry = input.entry;
        entry.scores.insert("quality".into(), input.quality);
        entry.scores.insert("aesthetic".into(), input.aesthetic);

        if cut.removed.contains(&entry.clip_id) {
            fail(&mut entry, RejectReason::LowQuality);
            out.push(entry);
            continue;
        }
        if !aesthetic_gate(input.aesthetic, aesthetic_threshold) {
            fail(&mut entry, RejectReason::LowAesthetic);
            out.push(entry);
            continue;
        }
        if let Some(weights) = &overlay {
            let embedding = embedding_for(config, services, &entry.clip_id)
                .map_err(|e| anyhow!("embedding for overlay check: {e}"))?;
            let probs = weights.infer(&embedding)?;
            let overlay_prob = probs[0];
            entry.scores.insert("text_overlay".into(), overlay_prob);
            if overlay_prob >= 0.5 {
                fail(&mut entry, RejectReason::TextOverlay);
                out.push(entry);
                continue;
            }
        }
        if let Some((category, accept_probability)) = acceptance
            .as_ref()
            .and_then(|a| a.get(&entry.clip_id))
        {
            entry.tags.insert(format!("category:{category}"));
            // Deterministic coin per clip: stable hash mapped to [0, 1).
            let coin = curator_core::client::unit_from_hash(curator_core::client::stable_hash64(
                &format!("resample:{}", entry.clip_id),
            ));
            if coin >= *accept_probability {
                fail(&mut entry, RejectReason::Downsampled);
                out.push(entry);
                continue;
            }
        }
        entry.tags.insert(TAG_FILTERS_APPLIED.into());
        out.push(entry);
    }
    Ok(out)
}

fn fail(entry: &mut ManifestEntry, reason: RejectReason) {
    entry.status = ClipStatus::FilteredOut;
    entry.reason = Some(format!("{reason:?}").to_lowercase());
}

fn load_mlp(path: Option<&Path>) -> Result<Option<MlpWeights>> {
    match path {
        Some(p) => {
            let file = File::open(p).with_context(|| format!("MLP weights {}", p.display()))?;
            Ok(Some(MlpWeights::from_json(BufReader::new(file))?))
        }
        None => Ok(None),
    }
}

/// Per-clip `(category, acceptance probability)` when resampling is
/// configured; `None` otherwise.
type AcceptanceMap = BTreeMap<String, (String, f64)>;

fn category_acceptance(
    config: &Config,
    services: &Services,
    inputs: &[SelectionInput],
    taxonomy: Option<&MlpWeights>,
) -> Result<Option<AcceptanceMap>> {
    let (Some(targets), Some(weights), Some(labels)) = (
        config.filters.category_targets.as_ref(),
        taxonomy,
        config.filters.taxonomy_labels.as_ref(),
    ) else {
        return Ok(None);
    };
    if inputs.is_empty() {
        return Ok(None);
    }

    let mut categories: BTreeMap<String, String> = BTreeMap::new();
    let mut counts: BTreeMap<String, u64> = targets.keys().map(|k| (k.clone(), 0)).collect();
    for input in inputs {
        let embedding = embedding_for(config, services, &input.entry.clip_id)
            .map_err(|e| anyhow!("embedding for taxonomy: {e}"))?;
        let probs = weights.infer(&embedding)?;
        let best = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let label = labels
            .get(best)
            .ok_or_else(|| anyhow!("taxonomy head index {best} has no label"))?;
        categories.insert(input.entry.clip_id.clone(), label.clone());
        *counts.entry(label.clone()).or_insert(0) += 1;
    }
    // Zero-count categories cannot be resampled from; give them the
    // smallest countable share so the acceptance math stays total.
    let observed: BTreeMap<String, f64> = counts
        .iter()
        .map(|(k, &c)| (k.clone(), (c.max(1)) as f64))
        .collect();
    let norm: f64 = observed.values().sum();
    let observed: BTreeMap<String, f64> =
        observed.into_iter().map(|(k, v)| (k, v / norm)).collect();
    let acceptance = resample_weights(&observed, targets)?;
    Ok(Some(
        categories
            .into_iter()
            .map(|(clip_id, category)| {
                let p = acceptance[&category];
                (clip_id, (category, p))
            })
            .collect(),
    ))
}

fn embedding_for(
    config: &Config,
    services: &Services,
    clip_id: &str,
) -> Result<Vec<f32>, ClientError> {
    let frames = service_frames(config, clip_id)?;
    services.embedder.embed(clip_id, &frames)
}

// ---------------------------------------------------------------------------
// Annotation

pub struct AnnotateOutcome {
    pub entry: ManifestEntry,
    pub captions: Vec<curator_core::annotate::Caption>,
    pub failed_windows: usize,
}

/// Captions every window of a clip. The entry transitions to `Annotated`
/// only if all windows succeed.
pub fn annotate_clip(
    config: &Config,
    services: &Services,
    mut entry: ManifestEntry,
) -> Result<AnnotateOutcome> {
    let windows = window_clip(
        entry.frame_count(),
        config.annotate.window,
        config.annotate.min_final_window,
    );
    let requests: Vec<CaptionRequest> = windows
        .iter()
        .enumerate()
        .map(|(i, &w)| build_caption_request(&entry.clip_id, i as u32, w, &config.annotate.prompt))
        .collect();
    let policy = RetryPolicy {
        max_retries: config.annotate.retries,
        ..Default::default()
    };
    let outcomes = caption_corpus(
        &requests,
        services.captioner.as_ref(),
        &policy,
        config.annotate.max_inflight,
        |request| request_frames(config, request),
    );

    let mut captions = Vec::new();
    let mut failed_windows = 0;
    for outcome in outcomes {
        match outcome.result {
            Ok(caption) => captions.push(caption),
            Err(e) => {
                log::warn!(
                    "caption failed for {} window {}: {e}",
                    outcome.clip_id,
                    outcome.window_index
                );
                failed_windows += 1;
            }
        }
    }
    if failed_windows == 0 {
        entry.status = ClipStatus::Annotated;
        entry.caption_refs = captions
            .iter()
            .map(|c| format!("{}#{}#{}", config.paths.captions_file().display(), c.clip_id, c.window_index))
            .collect();
    }
    Ok(AnnotateOutcome {
        entry,
        captions,
        failed_windows,
    })
}

/// Appends captions to the caption store (line-delimited JSON).
pub fn persist_captions(
    file: &mut impl Write,
    captions: &[curator_core::annotate::Caption],
) -> Result<()> {
    for caption in captions {
        serde_json::to_writer(&mut *file, caption)?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Dedup

pub struct DedupStageOutcome {
    /// Every input entry with its final status (kept entries tagged, losers
    /// `DedupedOut` with the winner named in the reason).
    pub entries: Vec<ManifestEntry>,
    pub removal_fraction: f64,
    pub failed: usize,
}

/// Embeds the corpus, clusters, finds duplicates and persists the search
/// index. Entries whose embedding failed are returned unchanged (neither
/// kept nor removed) and counted in `failed`.
pub fn dedup_corpus(
    config: &Config,
    services: &Services,
    entries: Vec<ManifestEntry>,
) -> Result<DedupStageOutcome> {
    let ids: Vec<String> = entries.iter().map(|e| e.clip_id.clone()).collect();
    let outcomes = embed_corpus(&ids, services.embedder.as_ref(), |clip_id| {
        service_frames(config, clip_id)
    });

    let mut embeddings: Vec<Embedding> = Vec::new();
    let mut failed_ids: Vec<String> = Vec::new();
    for outcome in outcomes {
        match outcome.result {
            Ok(embedding) => embeddings.push(embedding),
            Err(e) => {
                log::warn!("embedding failed for {}: {e}", outcome.clip_id);
                failed_ids.push(outcome.clip_id);
            }
        }
    }
    if embeddings.is_empty() {
        bail!("no clip could be embedded");
    }

    let k = config.dedup.k.min(embeddings.len());
    let model = kmeans_fit(&embeddings, k, config.dedup.max_iters, config.dedup.seed)?;

    let by_id: BTreeMap<&str, &ManifestEntry> =
        entries.iter().map(|e| (e.clip_id.as_str(), e)).collect();
    let items: Vec<DedupItem> = embeddings
        .iter()
        .map(|e| {
            let entry = by_id[e.clip_id.as_str()];
            DedupItem {
                clip_id: e.clip_id.clone(),
                vector: e.vector.clone(),
                pixels: u64::from(entry.width) * u64::from(entry.height),
            }
        })
        .collect();
    let outcome = dedup(&items, &model, config.dedup.eps, config.dedup.block)?;

    let winner_of: BTreeMap<&str, &str> = outcome
        .groups
        .iter()
        .flat_map(|g| {
            g.members
                .iter()
                .map(move |m| (m.as_str(), g.representative.as_str()))
        })
        .collect();

    let index = VectorIndex::build(&model, &embeddings)?;
    save_index(&config.paths.index, &index)?;

    let index_path = config.paths.index.display().to_string();
    let mut out = Vec::with_capacity(entries.len());
    for mut entry in entries {
        if failed_ids.contains(&entry.clip_id) {
            out.push(entry);
            continue;
        }
        entry.embedding_ref = Some(format!("{index_path}#{}", entry.clip_id));
        if outcome.removed.contains(&entry.clip_id) {
            entry.status = ClipStatus::DedupedOut;
            entry.reason = Some(format!(
                "duplicate_of:{}",
                winner_of.get(entry.clip_id.as_str()).copied().unwrap_or("?")
            ));
        } else {
            entry.tags.insert(TAG_DEDUP_KEPT.into());
        }
        out.push(entry);
    }
    Ok(DedupStageOutcome {
        entries: out,
        removal_fraction: outcome.removal_fraction,
        failed: failed_ids.len(),
    })
}

// ---------------------------------------------------------------------------
// Shard

pub struct ShardStageOutcome {
    pub entries: Vec<ManifestEntry>,
    pub shards: Vec<ShardSpec>,
}

/// Buckets the surviving clips and packs them into tar shards plus the
/// aggregate index.json.
pub fn shard_corpus(config: &Config, entries: Vec<ManifestEntry>) -> Result<ShardStageOutcome> {
    let mut bucketed: BTreeMap<String, Vec<ManifestEntry>> = BTreeMap::new();
    for mut entry in entries {
        let bucket = assign_bucket(entry.width, entry.height, entry.duration_seconds())?;
        entry.bucket = Some(bucket.to_string());
        bucketed.entry(bucket.to_string()).or_default().push(entry);
    }

    let mut all_specs: Vec<ShardSpec> = Vec::new();
    let mut out_entries = Vec::new();
    for (bucket_label, mut group) in bucketed {
        group.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
        let bucket: curator_core::shard::Bucket = bucket_label.parse()?;
        let mut items = Vec::with_capacity(group.len());
        for entry in &mut group {
            let payload_path = config.paths.clip_file(&entry.clip_id);
            let frames = std::fs::read(&payload_path).map_err(|_| {
                curator_core::shard::ShardError::PayloadMissing(entry.clip_id.clone())
            })?;
            entry.status = ClipStatus::Sharded;
            items.push(ShardItem {
                clip_id: entry.clip_id.clone(),
                metadata_json: serde_json::to_vec(entry)?,
                frames,
            });
        }
        let specs = write_shards(
            &bucket,
            items,
            config.shard.max_shard_bytes,
            &config.paths.shard_out,
        )?;
        for spec in &specs {
            for entry_ref in &spec.entries {
                if let Some(entry) = group.iter_mut().find(|e| e.clip_id == entry_ref.clip_id) {
                    entry.shard_ref = Some(format!("{}#{}", spec.path.display(), entry_ref.clip_id));
                }
            }
        }
        all_specs.extend(specs);
        out_entries.extend(group);
    }
    write_shard_index(&config.paths.shard_out.join("index.json"), &all_specs)?;
    Ok(ShardStageOutcome {
        entries: out_entries,
        shards: all_specs,
    })
}

// ---------------------------------------------------------------------------
// Synthetic inputs

/// Generates `count` synthetic source videos plus ground-truth boundary
/// files, returning the written paths.
pub fn generate_synthetic_corpus(
    out_dir: &Path,
    count: usize,
    width: u32,
    height: u32,
    fps: (u32, u32),
    max_cuts: usize,
    min_shot: u64,
    max_shot: u64,
    noise: u8,
    seed: u64,
) -> Result<Vec<(std::path::PathBuf, std::path::PathBuf)>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::with_capacity(count);
    for i in 0..count {
        let cuts = 1 + (seed as usize + i) % max_cuts.max(1);
        let spec = synth::random_spec(
            width,
            height,
            fps,
            cuts,
            min_shot,
            max_shot,
            noise,
            seed.wrapping_add(i as u64 * 7919),
        );
        let video_path = out_dir.join(format!("video_{i:03}.y4m"));
        let gt_path = out_dir.join(format!("video_{i:03}.gt.jsonl"));
        let boundaries = synth::write_video(&video_path, &spec)?;
        let mut gt = BufWriter::new(File::create(&gt_path)?);
        for b in &boundaries {
            writeln!(gt, "{{\"frame\": {b}}}")?;
        }
        gt.flush()?;
        written.push((video_path, gt_path));
    }
    Ok(written)
}
