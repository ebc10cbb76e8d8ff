//! Live pipeline execution on real threads.
//!
//! One bounded channel per stage; replicas of a streaming stage share the
//! receiver and block on full downstream queues (backpressure). Barrier
//! stages run a single gatherer that drains its upstream completely before
//! emitting. Items failing beyond the retry budget are counted as failed
//! (dead-lettered) and the run continues.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use crossbeam_channel::{bounded, Receiver, Sender};

use super::{
    Allocation, PipelineError, RunMode, RunReport, StageKind, StageReport, StageSpec,
};

/// What a stage did with one item.
#[derive(Debug, Clone)]
pub enum StageOutput<T> {
    Emit(T),
    Filtered,
    Failed(String),
}

/// Stage behavior. Streaming stages implement `process`; barrier stages get
/// the whole gathered batch, one output slot per input item.
pub trait StageLogic<T: Send>: Send + Sync {
    fn process(&self, item: T) -> StageOutput<T>;

    fn process_batch(&self, items: Vec<T>) -> Vec<StageOutput<T>> {
        items.into_iter().map(|item| self.process(item)).collect()
    }
}

pub struct PipelineStage<T: Send> {
    pub spec: StageSpec,
    pub logic: Arc<dyn StageLogic<T>>,
}

#[derive(Default)]
struct Counters {
    items_in: AtomicU64,
    items_out: AtomicU64,
    filtered: AtomicU64,
    failed: AtomicU64,
    retries: AtomicU64,
    peak_queue: AtomicU64,
    barrier_peak: AtomicU64,
    busy_nanos: AtomicU64,
}

fn bump_max(cell: &AtomicU64, candidate: u64) {
    cell.fetch_max(candidate, Ordering::Relaxed);
}

fn send_with_peak<T>(tx: &Sender<T>, counters: &Counters, item: T) {
    // A send can only fail if the receiver side panicked; the item is then
    // unaccounted anyway, so ignore the error and let join report it.
    let _ = tx.send(item);
    bump_max(&counters.peak_queue, tx.len() as u64);
}

fn run_streaming_worker<T: Send + Clone>(
    logic: &dyn StageLogic<T>,
    rx: &Receiver<T>,
    tx: Option<&Sender<T>>,
    counters: &Counters,
    downstream_counters: Option<&Counters>,
    retry_budget: u32,
) {
    while let Ok(item) = rx.recv() {
        counters.items_in.fetch_add(1, Ordering::Relaxed);
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            let started = Instant::now();
            let outcome = catch_unwind(AssertUnwindSafe(|| logic.process(item.clone())));
            counters
                .busy_nanos
                .fetch_add(started.elapsed().as_nanos() as u64, Ordering::Relaxed);
            match outcome {
                Ok(StageOutput::Emit(out)) => {
                    counters.items_out.fetch_add(1, Ordering::Relaxed);
                    if let (Some(tx), Some(dc)) = (tx, downstream_counters) {
                        send_with_peak(tx, dc, out);
                    }
                    break;
                }
                Ok(StageOutput::Filtered) => {
                    counters.filtered.fetch_add(1, Ordering::Relaxed);
                    break;
                }
                Ok(StageOutput::Failed(msg)) => {
                    if attempts > retry_budget {
                        log::warn!("item dead-lettered after {attempts} attempts: {msg}");
                        counters.failed.fetch_add(1, Ordering::Relaxed);
                        break;
                    }
                    counters.retries.fetch_add(1, Ordering::Relaxed);
                }
                Err(_) => {
                    if attempts > retry_budget {
                        log::warn!("item dead-lettered after {attempts} attempts: stage panicked");
                        counters.failed.fetch_add(1, Ordering::Relaxed);
                        break;
                    }
                    counters.retries.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
    }
}

fn run_barrier<T: Send>(
    logic: &dyn StageLogic<T>,
    rx: &Receiver<T>,
    tx: Option<&Sender<T>>,
    counters: &Counters,
    downstream_counters: Option<&Counters>,
) {
    let mut batch = Vec::new();
    while let Ok(item) = rx.recv() {
        counters.items_in.fetch_add(1, Ordering::Relaxed);
        batch.push(item);
        bump_max(&counters.barrier_peak, batch.len() as u64);
    }
    let batch_len = batch.len() as u64;
    let started = Instant::now();
    let outputs = catch_unwind(AssertUnwindSafe(|| logic.process_batch(batch)));
    counters
        .busy_nanos
        .fetch_add(started.elapsed().as_nanos() as u64, Ordering::Relaxed);
    match outputs {
        Ok(outputs) => {
            for output in outputs {
                match output {
                    StageOutput::Emit(out) => {
                        counters.items_out.fetch_add(1, Ordering::Relaxed);
                        if let (Some(tx), Some(dc)) = (tx, downstream_counters) {
                            send_with_peak(tx, dc, out);
                        }
                    }
                    StageOutput::Filtered => {
                        counters.filtered.fetch_add(1, Ordering::Relaxed);
                    }
                    StageOutput::Failed(msg) => {
                        log::warn!("barrier dead-lettered an item: {msg}");
                        counters.failed.fetch_add(1, Ordering::Relaxed);
                    }
                }
            }
        }
        Err(_) => {
            log::error!("barrier stage panicked; failing the whole batch");
            counters.failed.fetch_add(batch_len, Ordering::Relaxed);
        }
    }
}

/// Pulls `source` through the stage chain and reports per-stage accounting.
///
/// Replica counts come from `allocation`; barrier stages always run one
/// gatherer. The report satisfies per-stage conservation even when items
/// fail or stages panic.
pub fn run_pipeline<T, I>(
    stages: &[PipelineStage<T>],
    source: I,
    allocation: &Allocation,
    retry_budget: u32,
) -> Result<RunReport, PipelineError>
where
    T: Send + Clone + 'static,
    I: IntoIterator<Item = T> + Send,
{
    if stages.is_empty() {
        return Err(PipelineError::InvalidGraph("no stages".into()));
    }
    for stage in stages {
        stage.spec.validate()?;
    }

    let n = stages.len();
    let counters: Vec<Arc<Counters>> = (0..n).map(|_| Arc::new(Counters::default())).collect();
    let mut senders = Vec::with_capacity(n);
    let mut receivers = Vec::with_capacity(n);
    for stage in stages {
        let (tx, rx) = bounded::<T>(stage.spec.queue_capacity);
        senders.push(tx);
        receivers.push(rx);
    }

    let started = Instant::now();
    let mut source_count = 0u64;

    std::thread::scope(|scope| {
        // Workers first; each takes a clone of its input receiver and its
        // downstream sender. Dropping the original senders after spawning
        // lets disconnects propagate stage by stage.
        for (i, stage) in stages.iter().enumerate() {
            let rx = receivers[i].clone();
            let tx = if i + 1 < n {
                Some(senders[i + 1].clone())
            } else {
                None
            };
            let stage_counters = Arc::clone(&counters[i]);
            let downstream_counters = counters.get(i + 1).map(Arc::clone);
            let logic = Arc::clone(&stage.logic);
            match stage.spec.kind {
                StageKind::Barrier => {
                    scope.spawn(move || {
                        run_barrier(
                            logic.as_ref(),
                            &rx,
                            tx.as_ref(),
                            &stage_counters,
                            downstream_counters.as_deref(),
                        );
                    });
                }
                StageKind::Streaming => {
                    for _ in 0..allocation.replicas_of(&stage.spec.name).max(1) {
                        let rx = rx.clone();
                        let tx = tx.clone();
                        let stage_counters = Arc::clone(&stage_counters);
                        let downstream_counters = downstream_counters.as_ref().map(Arc::clone);
                        let logic = Arc::clone(&logic);
                        scope.spawn(move || {
                            run_streaming_worker(
                                logic.as_ref(),
                                &rx,
                                tx.as_ref(),
                                &stage_counters,
                                downstream_counters.as_deref(),
                                retry_budget,
                            );
                        });
                    }
                }
            }
        }
        // The scope now owns the worker-side clones; drop the originals so
        // each stage sees end-of-stream once its upstream finishes.
        let head = senders.remove(0);
        drop(senders);
        drop(receivers);

        for item in source {
            source_count += 1;
            send_with_peak(&head, &counters[0], item);
        }
        drop(head);
    });

    let duration = started.elapsed().as_secs_f64();
    let wall_nanos = started.elapsed().as_nanos().max(1) as f64;
    let stage_reports: Vec<StageReport> = stages
        .iter()
        .zip(&counters)
        .map(|(stage, c)| {
            let replicas = match stage.spec.kind {
                StageKind::Barrier => 1,
                StageKind::Streaming => allocation.replicas_of(&stage.spec.name).max(1),
            };
            StageReport {
                name: stage.spec.name.clone(),
                replicas,
                items_in: c.items_in.load(Ordering::Relaxed),
                items_out: c.items_out.load(Ordering::Relaxed),
                filtered: c.filtered.load(Ordering::Relaxed),
                failed: c.failed.load(Ordering::Relaxed),
                retries: c.retries.load(Ordering::Relaxed),
                peak_queue_depth: c.peak_queue.load(Ordering::Relaxed),
                barrier_buffered_peak: c.barrier_peak.load(Ordering::Relaxed),
                utilization: c.busy_nanos.load(Ordering::Relaxed) as f64
                    / (wall_nanos * f64::from(replicas)),
            }
        })
        .collect();

    let items_sink = stage_reports.last().map(|s| s.items_out).unwrap_or(0);
    Ok(RunReport {
        mode: RunMode::Live,
        duration_seconds: duration,
        items_source: source_count,
        items_sink,
        throughput_items_per_sec: if duration > 0.0 {
            items_sink as f64 / duration
        } else {
            0.0
        },
        peak_total_buffered: stage_reports.iter().map(|s| s.peak_queue_depth).sum(),
        stages: stage_reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::ResourceVector;

    fn spec(name: &str, kind: StageKind, queue_capacity: usize) -> StageSpec {
        StageSpec {
            name: name.to_string(),
            kind,
            demand: ResourceVector::of(&[("cpu", 1.0)]),
            service_time: 0.001,
            queue_capacity,
        }
    }

    fn alloc(pairs: &[(&str, u32)]) -> Allocation {
        Allocation {
            replicas: pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            placements: Vec::new(),
            predicted_throughput: 0.0,
        }
    }

    struct Identity;
    impl StageLogic<u64> for Identity {
        fn process(&self, item: u64) -> StageOutput<u64> {
            StageOutput::Emit(item)
        }
    }

    struct DropOdd;
    impl StageLogic<u64> for DropOdd {
        fn process(&self, item: u64) -> StageOutput<u64> {
            if item % 2 == 1 {
                StageOutput::Filtered
            } else {
                StageOutput::Emit(item)
            }
        }
    }

    #[test]
    fn identity_stages_conserve_all_items() {
        let stages = vec![
            PipelineStage {
                spec: spec("a", StageKind::Streaming, 4),
                logic: Arc::new(Identity),
            },
            PipelineStage {
                spec: spec("b", StageKind::Streaming, 4),
                logic: Arc::new(Identity),
            },
        ];
        let report = run_pipeline(&stages, 0..100u64, &alloc(&[("a", 2), ("b", 2)]), 2).unwrap();
        assert_eq!(report.items_source, 100);
        assert_eq!(report.items_sink, 100);
        assert!(report.all_conserved());
        for stage in &report.stages {
            assert_eq!(stage.items_in, 100);
            assert!(stage.peak_queue_depth <= 4);
        }
    }

    #[test]
    fn filter_stage_counts_drops() {
        let stages = vec![PipelineStage {
            spec: spec("drop_odd", StageKind::Streaming, 4),
            logic: Arc::new(DropOdd) as Arc<dyn StageLogic<u64>>,
        }];
        let report = run_pipeline(&stages, 0..100u64, &alloc(&[("drop_odd", 1)]), 0).unwrap();
        assert_eq!(report.stages[0].filtered, 50);
        assert_eq!(report.items_sink, 50);
        assert!(report.all_conserved());
    }

    struct FailEvery(u64);
    impl StageLogic<u64> for FailEvery {
        fn process(&self, item: u64) -> StageOutput<u64> {
            if item % self.0 == 0 {
                StageOutput::Failed(format!("injected failure for {item}"))
            } else {
                StageOutput::Emit(item)
            }
        }
    }

    #[test]
    fn failures_beyond_retry_budget_are_dead_lettered() {
        let stages = vec![PipelineStage {
            spec: spec("flaky", StageKind::Streaming, 4),
            logic: Arc::new(FailEvery(10)) as Arc<dyn StageLogic<u64>>,
        }];
        let report = run_pipeline(&stages, 0..100u64, &alloc(&[("flaky", 3)]), 2).unwrap();
        assert_eq!(report.stages[0].failed, 10);
        assert_eq!(report.items_sink, 90);
        assert_eq!(report.stages[0].retries, 20); // 10 items x 2 budgeted retries
        assert!(report.all_conserved());
    }

    struct SummingBarrier;
    impl StageLogic<u64> for SummingBarrier {
        fn process(&self, item: u64) -> StageOutput<u64> {
            StageOutput::Emit(item)
        }
        fn process_batch(&self, items: Vec<u64>) -> Vec<StageOutput<u64>> {
            // Keep items at or above the batch mean: a corpus-level cut.
            let mean = items.iter().sum::<u64>() as f64 / items.len().max(1) as f64;
            items
                .into_iter()
                .map(|item| {
                    if (item as f64) >= mean {
                        StageOutput::Emit(item)
                    } else {
                        StageOutput::Filtered
                    }
                })
                .collect()
        }
    }

    #[test]
    fn barrier_gathers_everything_then_emits() {
        let stages = vec![
            PipelineStage {
                spec: spec("pass", StageKind::Streaming, 4),
                logic: Arc::new(Identity) as Arc<dyn StageLogic<u64>>,
            },
            PipelineStage {
                spec: spec("cut", StageKind::Barrier, 4),
                logic: Arc::new(SummingBarrier) as Arc<dyn StageLogic<u64>>,
            },
        ];
        let report = run_pipeline(&stages, 0..10u64, &alloc(&[("pass", 2)]), 0).unwrap();
        let barrier = &report.stages[1];
        assert_eq!(barrier.items_in, 10);
        assert_eq!(barrier.items_out, 5); // 5..=9 are at or above the mean 4.5
        assert_eq!(barrier.filtered, 5);
        assert_eq!(barrier.barrier_buffered_peak, 10);
        assert!(report.all_conserved());
    }

    struct Panicking;
    impl StageLogic<u64> for Panicking {
        fn process(&self, item: u64) -> StageOutput<u64> {
            if item == 7 {
                panic!("boom");
            }
            StageOutput::Emit(item)
        }
    }

    #[test]
    fn panicking_logic_is_contained_and_counted() {
        let stages = vec![PipelineStage {
            spec: spec("explosive", StageKind::Streaming, 4),
            logic: Arc::new(Panicking) as Arc<dyn StageLogic<u64>>,
        }];
        let report = run_pipeline(&stages, 0..20u64, &alloc(&[("explosive", 1)]), 1).unwrap();
        assert_eq!(report.stages[0].failed, 1);
        assert_eq!(report.items_sink, 19);
        assert!(report.all_conserved());
    }

    #[test]
    fn empty_source_yields_empty_report() {
        let stages = vec![PipelineStage {
            spec: spec("a", StageKind::Streaming, 4),
            logic: Arc::new(Identity) as Arc<dyn StageLogic<u64>>,
        }];
        let report =
            run_pipeline(&stages, std::iter::empty::<u64>(), &alloc(&[("a", 1)]), 0).unwrap();
        assert_eq!(report.items_source, 0);
        assert_eq!(report.items_sink, 0);
        assert!(report.all_conserved());
    }

    #[test]
    fn replicas_default_to_one_when_absent_from_allocation() {
        let stages = vec![PipelineStage {
            spec: spec("a", StageKind::Streaming, 4),
            logic: Arc::new(Identity) as Arc<dyn StageLogic<u64>>,
        }];
        let report = run_pipeline(&stages, 0..10u64, &alloc(&[]), 0).unwrap();
        assert_eq!(report.stages[0].replicas, 1);
        assert_eq!(report.items_sink, 10);
    }
}
