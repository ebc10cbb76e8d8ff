//! External transcoder process contract.
//!
//! The engine never links a codec. Compressed video is produced by an
//! external tool invoked through a command template, one batched invocation
//! per source video so the tool can reuse its decode state across all clips
//! of that source.
//!
//! Template grammar: whitespace-separated argv tokens, with `{input}`,
//! `{start}`, `{end}` and `{output}` placeholders. Tokens between literal
//! `[` and `]` tokens form the per-clip section, repeated once per clip in
//! the batch; everything else is rendered once. Example:
//!
//! ```text
//! ffmpeg -y -i {input} [ -ss {start} -to {end} -c:v libx264 {output} ]
//! ```
//!
//! `{start}` and `{end}` render as frame indices. Exit code 0 means every
//! clip in the batch succeeded.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TranscodeError {
    #[error("template error: {0}")]
    Template(String),
    #[error("transcode of source {source_id} failed: {detail}")]
    ProcessFailure { source_id: String, detail: String },
    #[error("invalid clip range {start}..{end} in source {source_id}")]
    InvalidRange {
        source_id: String,
        start: u64,
        end: u64,
    },
}

/// One clip to cut from a source.
#[derive(Debug, Clone)]
pub struct ClipSpan {
    pub start_frame: u64,
    pub end_frame: u64,
    pub output: PathBuf,
}

/// A batch of clips from one source video.
#[derive(Debug, Clone)]
pub struct TranscodeJob {
    pub source_id: String,
    pub input: PathBuf,
    pub clips: Vec<ClipSpan>,
}

impl TranscodeJob {
    /// Ranges must be well-formed, non-overlapping and inside the source.
    pub fn validate(&self, source_len: Option<u64>) -> Result<(), TranscodeError> {
        let mut spans: Vec<(u64, u64)> = self
            .clips
            .iter()
            .map(|c| (c.start_frame, c.end_frame))
            .collect();
        spans.sort_unstable();
        for (i, &(start, end)) in spans.iter().enumerate() {
            let bad_order = start >= end;
            let out_of_range = source_len.is_some_and(|len| end > len);
            let overlaps = i > 0 && start < spans[i - 1].1;
            if bad_order || out_of_range || overlaps {
                return Err(TranscodeError::InvalidRange {
                    source_id: self.source_id.clone(),
                    start,
                    end,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TranscodeStatus {
    Done,
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct ClipResult {
    pub output: PathBuf,
    pub status: TranscodeStatus,
}

/// Aggregate timing for a transcode run. Throughput is whole source videos
/// per wall-clock second.
#[derive(Debug, Clone, Serialize, Default)]
pub struct ThroughputReport {
    pub sources_total: u64,
    pub sources_completed: u64,
    pub clips_total: u64,
    pub clips_completed: u64,
    pub wall_seconds: f64,
    pub videos_per_second: f64,
}

/// Something that can execute one batched transcode invocation.
pub trait TranscoderClient {
    fn transcode_batch(
        &self,
        source_id: &str,
        input: &Path,
        clips: &[ClipSpan],
    ) -> Result<(), TranscodeError>;
}

const PLACEHOLDERS: [&str; 4] = ["{input}", "{start}", "{end}", "{output}"];

/// Parsed command template. See the module docs for the grammar.
#[derive(Debug, Clone)]
pub struct CommandTemplate {
    tokens: Vec<String>,
    /// Token index range of the per-clip section, brackets excluded.
    group: Option<(usize, usize)>,
}

impl CommandTemplate {
    pub fn parse(template: &str) -> Result<Self, TranscodeError> {
        let raw: Vec<&str> = template.split_whitespace().collect();
        if raw.is_empty() {
            return Err(TranscodeError::Template("empty template".into()));
        }
        let open = raw.iter().position(|&t| t == "[");
        let close = raw.iter().position(|&t| t == "]");
        let (tokens, group) = match (open, close) {
            (None, None) => (raw.iter().map(|s| s.to_string()).collect::<Vec<_>>(), None),
            (Some(o), Some(c)) if o < c => {
                let mut tokens = Vec::new();
                tokens.extend(raw[..o].iter().map(|s| s.to_string()));
                let group_start = tokens.len();
                tokens.extend(raw[o + 1..c].iter().map(|s| s.to_string()));
                let group_end = tokens.len();
                tokens.extend(raw[c + 1..].iter().map(|s| s.to_string()));
                (tokens, Some((group_start, group_end)))
            }
            _ => {
                return Err(TranscodeError::Template(
                    "unbalanced [ ] per-clip section".into(),
                ))
            }
        };

        // Every {..} occurrence must be a known placeholder.
        for token in &tokens {
            let mut rest = token.as_str();
            while let Some(pos) = rest.find('{') {
                let tail = &rest[pos..];
                let end = tail
                    .find('}')
                    .ok_or_else(|| TranscodeError::Template(format!("unclosed brace in {token}")))?;
                let ph = &tail[..=end];
                if !PLACEHOLDERS.contains(&ph) {
                    return Err(TranscodeError::Template(format!(
                        "unresolved placeholder {ph}"
                    )));
                }
                rest = &tail[end + 1..];
            }
        }

        let clip_scope: &[String] = match group {
            Some((s, e)) => &tokens[s..e],
            None => &tokens[..],
        };
        if !clip_scope.iter().any(|t| t.contains("{output}")) {
            return Err(TranscodeError::Template(
                "template missing {output} placeholder".into(),
            ));
        }

        Ok(Self {
            tokens,
            group,
        })
    }

    /// Renders the argv for one batched invocation.
    pub fn render(&self, input: &Path, clips: &[ClipSpan]) -> Result<Vec<String>, TranscodeError> {
        let input_str = input.to_string_lossy();
        let sub_clip = |token: &str, clip: &ClipSpan| {
            token
                .replace("{input}", &input_str)
                .replace("{start}", &clip.start_frame.to_string())
                .replace("{end}", &clip.end_frame.to_string())
                .replace("{output}", &clip.output.to_string_lossy())
        };
        match self.group {
            Some((start, end)) => {
                let mut argv: Vec<String> = self.tokens[..start]
                    .iter()
                    .map(|t| t.replace("{input}", &input_str))
                    .collect();
                for clip in clips {
                    argv.extend(self.tokens[start..end].iter().map(|t| sub_clip(t, clip)));
                }
                argv.extend(
                    self.tokens[end..]
                        .iter()
                        .map(|t| t.replace("{input}", &input_str)),
                );
                Ok(argv)
            }
            None => {
                if clips.len() != 1 {
                    return Err(TranscodeError::Template(
                        "template needs a [ ... ] per-clip section for batched invocations".into(),
                    ));
                }
                Ok(self.tokens.iter().map(|t| sub_clip(t, &clips[0])).collect())
            }
        }
    }
}

/// Spawns the configured command, one process per source batch.
pub struct CommandTranscoder {
    template: CommandTemplate,
}

impl CommandTranscoder {
    pub fn new(template: &str) -> Result<Self, TranscodeError> {
        Ok(Self {
            template: CommandTemplate::parse(template)?,
        })
    }
}

impl TranscoderClient for CommandTranscoder {
    fn transcode_batch(
        &self,
        source_id: &str,
        input: &Path,
        clips: &[ClipSpan],
    ) -> Result<(), TranscodeError> {
        let argv = self.template.render(input, clips)?;
        let status = Command::new(&argv[0])
            .args(&argv[1..])
            .status()
            .map_err(|e| TranscodeError::ProcessFailure {
                source_id: source_id.to_string(),
                detail: format!("spawn {}: {e}", argv[0]),
            })?;
        if !status.success() {
            return Err(TranscodeError::ProcessFailure {
                source_id: source_id.to_string(),
                detail: format!("exit status {status}"),
            });
        }
        Ok(())
    }
}

/// Runs all jobs, batching clips by source. Per-source failures are recorded
/// per clip and do not abort the run; template errors do.
pub fn run_transcode(
    jobs: &[TranscodeJob],
    client: &dyn TranscoderClient,
) -> Result<(Vec<ClipResult>, ThroughputReport), TranscodeError> {
    // Merge jobs sharing a source into one batch, preserving first-seen order.
    let mut order: Vec<String> = Vec::new();
    let mut merged: BTreeMap<String, TranscodeJob> = BTreeMap::new();
    for job in jobs {
        match merged.get_mut(&job.source_id) {
            Some(existing) => existing.clips.extend(job.clips.iter().cloned()),
            None => {
                order.push(job.source_id.clone());
                merged.insert(job.source_id.clone(), job.clone());
            }
        }
    }
    for job in merged.values() {
        job.validate(None)?;
    }

    let start = Instant::now();
    let mut results = Vec::new();
    let mut report = ThroughputReport {
        sources_total: order.len() as u64,
        ..Default::default()
    };
    for source_id in &order {
        let job = &merged[source_id];
        report.clips_total += job.clips.len() as u64;
        match client.transcode_batch(source_id, &job.input, &job.clips) {
            Ok(()) => {
                report.sources_completed += 1;
                report.clips_completed += job.clips.len() as u64;
                results.extend(job.clips.iter().map(|c| ClipResult {
                    output: c.output.clone(),
                    status: TranscodeStatus::Done,
                }));
            }
            Err(TranscodeError::Template(msg)) => return Err(TranscodeError::Template(msg)),
            Err(err) => {
                log::warn!("transcode batch for {source_id} failed: {err}");
                results.extend(job.clips.iter().map(|c| ClipResult {
                    output: c.output.clone(),
                    status: TranscodeStatus::Failed(err.to_string()),
                }));
            }
        }
    }
    report.wall_seconds = start.elapsed().as_secs_f64();
    report.videos_per_second = if report.wall_seconds > 0.0 && report.sources_completed > 0 {
        report.sources_completed as f64 / report.wall_seconds
    } else {
        0.0
    };
    Ok((results, report))
}
