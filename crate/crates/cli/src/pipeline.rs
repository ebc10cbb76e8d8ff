//! The `run` command: the five curation steps as one streaming pipeline.
//!
//! Live mode splits sources on the source thread, then pulls clip tasks
//! through motion filtering, corpus selection (barrier), annotation,
//! embedding, dedup (barrier) and sharding (barrier), writing manifest
//! transitions as items pass. Simulate mode runs the same stage chain on
//! the virtual clock without touching the filesystem.

use std::io::BufWriter;
use std::path::Path;
use std::sync::{Arc, Mutex};

use anyhow::{Context, Result};

use curator_core::manifest::{ClipStatus, ManifestEntry, ManifestStore, ScanFilter};
use curator_core::orchestrator::{
    run_pipeline, schedule, simulate, Allocation, PipelineDef, PipelineStage, ResourceVector,
    RunReport, ServiceJitter, SimOptions, StageKind, StageLogic, StageOutput, StageSpec,
};

use crate::config::Config;
use crate::services::Services;
use crate::stages::{self, TAG_DEDUP_KEPT, TAG_FILTERS_APPLIED};
use crate::CommandOutcome;

/// The item flowing through the live pipeline.
#[derive(Clone)]
struct ClipTask {
    entry: ManifestEntry,
}

struct RunCtx {
    config: Config,
    services: Services,
    store: Mutex<ManifestStore>,
    captions: Mutex<BufWriter<std::fs::File>>,
}

impl RunCtx {
    fn append(&self, entry: &ManifestEntry) -> Result<(), String> {
        self.store
            .lock()
            .map_err(|_| "manifest lock poisoned".to_string())?
            .append(entry)
            .map_err(|e| e.to_string())
    }
}

/// Default stage profile used when the config carries no pipeline
/// definition. Demands are per-replica; the hints are desk-scale service
/// times used for scheduling and simulation.
pub fn default_pipeline_def() -> PipelineDef {
    let stage = |name: &str, kind: &str, service: f64| {
        serde_json::json!({
            "name": name,
            "kind": kind,
            "demand": {"cpu": 1.0},
            "service_time_hint": service,
            "queue_capacity": 8,
        })
    };
    serde_json::from_value(serde_json::json!({
        "stages": [
            stage("motion_filter", "streaming", 0.05),
            stage("select", "barrier", 0.01),
            stage("annotate", "streaming", 0.05),
            stage("embed", "streaming", 0.02),
            stage("dedup", "barrier", 0.02),
            stage("shard", "barrier", 0.02),
        ],
        "edges": [
            ["motion_filter", "select"],
            ["select", "annotate"],
            ["annotate", "embed"],
            ["embed", "dedup"],
            ["dedup", "shard"],
        ],
    }))
    .expect("default pipeline definition is valid")
}

fn ordered_specs(config: &Config) -> Result<Vec<StageSpec>> {
    let def = config
        .pipeline
        .clone()
        .unwrap_or_else(default_pipeline_def);
    Ok(def.ordered_specs()?)
}

fn allocation_for(config: &Config, specs: &[StageSpec]) -> Result<Allocation> {
    Ok(schedule(specs, &config.nodes)?)
}

pub fn cmd_run(
    config: &Config,
    simulate_only: bool,
    report_path: Option<&Path>,
    items: u64,
    seed: u64,
) -> Result<CommandOutcome> {
    let specs = ordered_specs(config)?;
    let allocation = allocation_for(config, &specs)?;
    log::info!(
        "allocation: {:?} (predicted {:.3} items/s)",
        allocation.replicas,
        allocation.predicted_throughput
    );

    let report = if simulate_only {
        simulate(
            &specs,
            &allocation,
            items,
            SimOptions {
                seed,
                jitter: ServiceJitter::None,
            },
        )?
    } else {
        run_live(config, &specs, &allocation)?
    };

    let rendered = report.to_json_pretty();
    match report_path {
        Some(path) => {
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, &rendered)
                .with_context(|| format!("writing report {}", path.display()))?;
        }
        None => println!("{rendered}"),
    }

    let failed: u64 = report.stages.iter().map(|s| s.failed).sum();
    Ok(CommandOutcome::from_failures(failed as usize))
}

// ---------------------------------------------------------------------------
// Stage logic adapters

struct MotionFilterStage {
    ctx: Arc<RunCtx>,
}

impl StageLogic<ClipTask> for MotionFilterStage {
    fn process(&self, mut task: ClipTask) -> StageOutput<ClipTask> {
        if task.entry.tags.contains(TAG_FILTERS_APPLIED) {
            return StageOutput::Emit(task); // already filtered in a previous run
        }
        match stages::motion_verdict(&self.ctx.config, &task.entry) {
            Ok(verdict) => {
                stages::apply_verdict(&mut task.entry, &verdict);
                if task.entry.status == ClipStatus::FilteredOut {
                    match self.ctx.append(&task.entry) {
                        Ok(()) => StageOutput::Filtered,
                        Err(e) => StageOutput::Failed(e),
                    }
                } else {
                    StageOutput::Emit(task)
                }
            }
            Err(e) => StageOutput::Failed(format!("motion analysis: {e:#}")),
        }
    }
}

struct SelectStage {
    ctx: Arc<RunCtx>,
}

impl StageLogic<ClipTask> for SelectStage {
    fn process(&self, task: ClipTask) -> StageOutput<ClipTask> {
        StageOutput::Emit(task)
    }

    fn process_batch(&self, tasks: Vec<ClipTask>) -> Vec<StageOutput<ClipTask>> {
        let ctx = &self.ctx;
        let mut inputs = Vec::new();
        let mut outputs: Vec<Option<StageOutput<ClipTask>>> = Vec::new();
        let mut input_slots = Vec::new();
        for (slot, task) in tasks.into_iter().enumerate() {
            if task.entry.tags.contains(TAG_FILTERS_APPLIED) {
                outputs.push(Some(StageOutput::Emit(task)));
                continue;
            }
            match stages::score_clip(&ctx.config, &ctx.services, &task.entry) {
                Ok((quality, aesthetic)) => {
                    inputs.push(stages::SelectionInput {
                        entry: task.entry,
                        quality,
                        aesthetic,
                    });
                    input_slots.push(slot);
                    outputs.push(None);
                }
                Err(e) => outputs.push(Some(StageOutput::Failed(format!("scoring: {e}")))),
            }
        }

        match stages::select_corpus(&ctx.config, &ctx.services, inputs) {
            Ok(selected) => {
                for (slot, entry) in input_slots.into_iter().zip(selected) {
                    let output = match ctx.append(&entry) {
                        Err(e) => StageOutput::Failed(e),
                        Ok(()) if entry.status == ClipStatus::FilteredOut => StageOutput::Filtered,
                        Ok(()) => StageOutput::Emit(ClipTask { entry }),
                    };
                    outputs[slot] = Some(output);
                }
            }
            Err(e) => {
                let message = format!("selection barrier: {e:#}");
                for slot in input_slots {
                    outputs[slot] = Some(StageOutput::Failed(message.clone()));
                }
            }
        }
        outputs
            .into_iter()
            .map(|o| o.expect("every slot resolved"))
            .collect()
    }
}

struct AnnotateStage {
    ctx: Arc<RunCtx>,
}

impl StageLogic<ClipTask> for AnnotateStage {
    fn process(&self, task: ClipTask) -> StageOutput<ClipTask> {
        if task.entry.status == ClipStatus::Annotated {
            return StageOutput::Emit(task);
        }
        let ctx = &self.ctx;
        match stages::annotate_clip(&ctx.config, &ctx.services, task.entry) {
            Ok(outcome) => {
                let persisted = ctx
                    .captions
                    .lock()
                    .map_err(|_| "captions lock poisoned".to_string())
                    .and_then(|mut f| {
                        stages::persist_captions(&mut *f, &outcome.captions)
                            .map_err(|e| e.to_string())
                    });
                if let Err(e) = persisted {
                    return StageOutput::Failed(e);
                }
                if outcome.failed_windows > 0 {
                    return StageOutput::Failed(format!(
                        "{} caption windows failed",
                        outcome.failed_windows
                    ));
                }
                match ctx.append(&outcome.entry) {
                    Ok(()) => StageOutput::Emit(ClipTask {
                        entry: outcome.entry,
                    }),
                    Err(e) => StageOutput::Failed(e),
                }
            }
            Err(e) => StageOutput::Failed(format!("annotate: {e:#}")),
        }
    }
}

struct EmbedStage {
    ctx: Arc<RunCtx>,
}

impl StageLogic<ClipTask> for EmbedStage {
    fn process(&self, task: ClipTask) -> StageOutput<ClipTask> {
        // Embeddings are recomputed inside the dedup barrier; this stage
        // exists to pay the per-clip service cost in streaming position and
        // to fail fast on unreachable embedders.
        match stages::service_frames(&self.ctx.config, &task.entry.clip_id) {
            Ok(frames) => match self
                .ctx
                .services
                .embedder
                .embed(&task.entry.clip_id, &frames)
            {
                Ok(_) => StageOutput::Emit(task),
                Err(e) => StageOutput::Failed(format!("embed: {e}")),
            },
            Err(e) => StageOutput::Failed(format!("embed frames: {e}")),
        }
    }
}

struct DedupStage {
    ctx: Arc<RunCtx>,
}

impl StageLogic<ClipTask> for DedupStage {
    fn process(&self, task: ClipTask) -> StageOutput<ClipTask> {
        StageOutput::Emit(task)
    }

    fn process_batch(&self, tasks: Vec<ClipTask>) -> Vec<StageOutput<ClipTask>> {
        let ctx = &self.ctx;
        if tasks.is_empty() {
            return Vec::new();
        }
        let entries: Vec<ManifestEntry> = tasks.iter().map(|t| t.entry.clone()).collect();
        match stages::dedup_corpus(&ctx.config, &ctx.services, entries) {
            Ok(outcome) => outcome
                .entries
                .into_iter()
                .map(|entry| match ctx.append(&entry) {
                    Err(e) => StageOutput::Failed(e),
                    Ok(()) if entry.status == ClipStatus::DedupedOut => StageOutput::Filtered,
                    Ok(()) if !entry.tags.contains(TAG_DEDUP_KEPT) => {
                        StageOutput::Failed("embedding failed".into())
                    }
                    Ok(()) => StageOutput::Emit(ClipTask { entry }),
                })
                .collect(),
            Err(e) => {
                let message = format!("dedup barrier: {e:#}");
                tasks
                    .iter()
                    .map(|_| StageOutput::Failed(message.clone()))
                    .collect()
            }
        }
    }
}

struct ShardStage {
    ctx: Arc<RunCtx>,
}

impl StageLogic<ClipTask> for ShardStage {
    fn process(&self, task: ClipTask) -> StageOutput<ClipTask> {
        StageOutput::Emit(task)
    }

    fn process_batch(&self, tasks: Vec<ClipTask>) -> Vec<StageOutput<ClipTask>> {
        let ctx = &self.ctx;
        if tasks.is_empty() {
            return Vec::new();
        }
        let entries: Vec<ManifestEntry> = tasks.iter().map(|t| t.entry.clone()).collect();
        match stages::shard_corpus(&ctx.config, entries) {
            Ok(outcome) => outcome
                .entries
                .into_iter()
                .map(|entry| match ctx.append(&entry) {
                    Ok(()) => StageOutput::Emit(ClipTask { entry }),
                    Err(e) => StageOutput::Failed(e),
                })
                .collect(),
            Err(e) => {
                let message = format!("shard barrier: {e:#}");
                tasks
                    .iter()
                    .map(|_| StageOutput::Failed(message.clone()))
                    .collect()
            }
        }
    }
}

fn run_live(config: &Config, specs: &[StageSpec], allocation: &Allocation) -> Result<RunReport> {
    std::fs::create_dir_all(&config.paths.workdir)?;
    let store = ManifestStore::open(&config.paths.manifest)?;
    let captions = BufWriter::new(
        std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(config.paths.captions_file())?,
    );
    let ctx = Arc::new(RunCtx {
        config: config.clone(),
        services: Services::from_config(config)?,
        store: Mutex::new(store),
        captions: Mutex::new(captions),
    });

    let logic_for = |name: &str| -> Arc<dyn StageLogic<ClipTask>> {
        match name {
            "motion_filter" => Arc::new(MotionFilterStage { ctx: ctx.clone() }),
            "select" => Arc::new(SelectStage { ctx: ctx.clone() }),
            "annotate" => Arc::new(AnnotateStage { ctx: ctx.clone() }),
            "embed" => Arc::new(EmbedStage { ctx: ctx.clone() }),
            "dedup" => Arc::new(DedupStage { ctx: ctx.clone() }),
            "shard" => Arc::new(ShardStage { ctx: ctx.clone() }),
            other => panic!("no logic registered for stage {other}"),
        }
    };
    for spec in specs {
        if !matches!(
            spec.name.as_str(),
            "motion_filter" | "select" | "annotate" | "embed" | "dedup" | "shard"
        ) {
            anyhow::bail!(
                "pipeline stage {} has no registered implementation; \
                 the live pipeline supports the built-in stage names",
                spec.name
            );
        }
    }
    let pipeline: Vec<PipelineStage<ClipTask>> = specs
        .iter()
        .map(|spec| PipelineStage {
            spec: spec.clone(),
            logic: logic_for(&spec.name),
        })
        .collect();

    // Source: split any new inputs, then feed every non-terminal clip.
    let source_tasks = build_source_tasks(&ctx)?;
    log::info!("run: {} clip tasks entering the pipeline", source_tasks.len());

    let report = run_pipeline(
        &pipeline,
        source_tasks.into_iter(),
        allocation,
        config.retry_budget,
    )?;
    Ok(report)
}

/// Splits unsplit sources and returns one task per non-terminal clip.
fn build_source_tasks(ctx: &Arc<RunCtx>) -> Result<Vec<ClipTask>> {
    let config = &ctx.config;
    let sources = {
        let store = ctx.store.lock().expect("manifest lock");
        let mut sources = Vec::new();
        for entry in std::fs::read_dir(&config.paths.input_dir)
            .with_context(|| format!("input directory {}", config.paths.input_dir.display()))?
        {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "y4m") {
                let source_id = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                let existing = store.scan(&ScanFilter {
                    source_id: Some(source_id.clone()),
                    ..Default::default()
                })?;
                sources.push((source_id, path, existing.entries.is_empty()));
            }
        }
        sources.sort();
        sources
    };

    for (source_id, path, is_new) in &sources {
        if !is_new {
            continue;
        }
        let outcome = stages::split_source(config, source_id, path)?;
        let mut store = ctx.store.lock().expect("manifest lock");
        for entry in &outcome.entries {
            store.append(entry)?;
        }
    }

    let store = ctx.store.lock().expect("manifest lock");
    let all = store.scan(&ScanFilter::default())?;
    Ok(all
        .entries
        .into_iter()
        .filter(|e| !e.status.is_terminal())
        .map(|entry| ClipTask { entry })
        .collect())
}

// Keep the resource type exported for config docs/tests.
#[allow(unused)]
fn _resource_vector_is_public() -> ResourceVector {
    ResourceVector::new()
}
