//! `curator` — operator CLI for the video curation pipeline.
//!
//! One subcommand per pipeline stage (split, filter, annotate, dedup,
//! shard) so any stage can be rerun in isolation, plus `run` for the full
//! streaming pipeline, `eval-split` for detector scoring, `search` for the
//! embedding index, and `synth` for generating test inputs.
//!
//! Exit codes: 0 clean, 1 partial item failures, 2 configuration or usage
//! errors.

mod commands;
mod config;
mod pipeline;
mod services;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Config, Profile};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandOutcome {
    Clean,
    Partial,
}

impl CommandOutcome {
    pub fn from_failures(failures: usize) -> Self {
        if failures == 0 {
            CommandOutcome::Clean
        } else {
            CommandOutcome::Partial
        }
    }
}

#[derive(Parser)]
#[command(name = "curator", version, about = "Video dataset curation pipeline")]
struct Cli {
    /// Path to the JSON config file (defaults apply when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the manifest path from the config.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    /// Override the input directory from the config.
    #[arg(long, global = true)]
    input: Option<PathBuf>,

    /// Threshold profile.
    #[arg(long, global = true, value_parser = parse_profile)]
    profile: Option<Profile>,

    #[command(subcommand)]
    command: Command,
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    match s {
        "pretrain" => Ok(Profile::Pretrain),
        "finetune" => Ok(Profile::Finetune),
        other => Err(format!("unknown profile {other} (pretrain|finetune)")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Detect shots in every input video and register clips.
    Split {
        /// Also write detected boundaries per source as line-delimited JSON.
        #[arg(long)]
        boundaries_out: Option<PathBuf>,
    },
    /// Motion, quality, aesthetic and overlay filtering.
    Filter,
    /// Caption filtered clips.
    Annotate,
    /// Embed, cluster and remove semantic duplicates.
    Dedup,
    /// Bucket surviving clips and pack tar shards.
    Shard,
    /// Run the whole pipeline (live threads, or --simulate).
    Run {
        /// Virtual-clock simulation: no curation work, no filesystem writes
        /// except the report.
        #[arg(long)]
        simulate: bool,
        /// Write the run report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Item count for --simulate.
        #[arg(long, default_value_t = 1000)]
        items: u64,
        /// Seed for --simulate.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score predicted boundaries against ground truth.
    EvalSplit {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Frame tolerance (config default when omitted).
        #[arg(long)]
        tolerance: Option<u64>,
    },
    /// Query the embedding index.
    Search {
        /// Use an indexed clip's own embedding as the query.
        #[arg(long, conflicts_with = "vector_file")]
        query_clip: Option<String>,
        /// JSON array of floats to use as the query.
        #[arg(long)]
        vector_file: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        topk: usize,
    },
    /// Generate synthetic multi-shot videos with ground truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        count: usize,
        #[arg(long, default_value_t = 96)]
        width: u32,
        #[arg(long, default_value_t = 96)]
        height: u32,
        #[arg(long, default_value_t = 30)]
        fps: u32,
        #[arg(long, default_value_t = 3)]
        max_cuts: usize,
        #[arg(long, default_value_t = 70)]
        min_shot: u64,
        #[arg(long, default_value_t = 140)]
        max_shot: u64,
        #[arg(long, default_value_t = 0)]
        noise: u8,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Summarize manifest state.
    Status,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(CommandOutcome::Clean) => ExitCode::SUCCESS,
        Ok(CommandOutcome::Partial) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Errors bubbling out of here are configuration/usage problems (exit 2);
/// per-item failures inside a stage surface as `CommandOutcome::Partial`.
fn run(cli: Cli) -> anyhow::Result<CommandOutcome> {
    let mut config = Config::load(cli.config.as_deref(), cli.profile)?;
    if let Some(manifest) = cli.manifest {
        config.paths.manifest = manifest;
    }
    if let Some(input) = cli.input {
        config.paths.input_dir = input;
    }

    match cli.command {
        Command::Split { boundaries_out } => {
            commands::cmd_split(&config, boundaries_out.as_deref())
        }
        Command::Filter => commands::cmd_filter(&config),
        Command::Annotate => commands::cmd_annotate(&config),
        Command::Dedup => commands::cmd_dedup(&config),
        Command::Shard => commands::cmd_shard(&config),
        Command::Run {
            simulate,
            report,
            items,
            seed,
        } => pipeline::cmd_run(&config, simulate, report.as_deref(), items, seed),
        Command::EvalSplit {
            pred,
            gt,
            tolerance,
        } => commands::cmd_eval_split(&config, &pred, &gt, tolerance),
        Command::Search {
            query_clip,
            vector_file,
            topk,
        } => commands::cmd_search(&config, query_clip.as_deref(), vector_file.as_deref(), topk),
        Command::Synth {
            out,
            count,
            width,
            height,
            fps,
            max_cuts,
            min_shot,
            max_shot,
            noise,
            seed,
        } => commands::cmd_synth(
            &out, count, width, height, fps, max_cuts, min_shot, max_shot, noise, seed,
        ),
        Command::Status => commands::cmd_status(&config),
    }
}
