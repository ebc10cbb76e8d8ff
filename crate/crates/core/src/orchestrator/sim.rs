//! Deterministic virtual-time pipeline simulation.
//!
//! An event-driven model of the live executor: bounded queues, replicas
//! that block when their downstream queue is full, and barrier stages that
//! gather their whole upstream before processing. Given the same seed the
//! simulation is bit-deterministic, including the serialized report.
//!
//! Backpressure is modeled exactly: a replica finishing an item holds it
//! until the downstream queue has space, and blocked replicas unblock in
//! FIFO order as space appears. The source injects items whenever the head
//! queue has room, so memory use is governed entirely by queue capacities.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    Allocation, PipelineError, RunMode, RunReport, StageKind, StageReport, StageSpec,
};

/// Service time model for simulated stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServiceJitter {
    /// Every item takes exactly the stage's mean service time.
    None,
    /// Exponentially distributed service times with the stage's mean.
    Exponential,
}

#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    pub seed: u64,
    pub jitter: ServiceJitter,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            jitter: ServiceJitter::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Time(f64);

impl Eq for Time {}

impl PartialOrd for Time {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Time {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    /// A streaming replica finished its item.
    ReplicaDone { stage: usize, replica: u32 },
    /// A barrier stage finished processing its gathered batch.
    BatchDone { stage: usize },
}

#[derive(Debug, PartialEq, Eq)]
enum BarrierState {
    Gathering,
    Processing,
    Emitted,
}

struct StageState {
    queue: VecDeque<u64>,
    idle: BinaryHeap<Reverse<u32>>,
    /// Upstream replicas blocked on this stage's full queue, FIFO. The
    /// replica id is `BARRIER_EMITTER` when the waiter is a barrier
    /// draining its processed batch.
    blocked_in: VecDeque<(usize, u32, u64)>,
    busy: u32,
    barrier: Option<BarrierRuntime>,
    // accounting
    items_in: u64,
    items_out: u64,
    peak_queue: u64,
    busy_time: f64,
}

struct BarrierRuntime {
    gathered: VecDeque<u64>,
    state: BarrierState,
    peak_gathered: u64,
}

const BARRIER_EMITTER: u32 = u32::MAX;

struct Sim<'a> {
    specs: &'a [StageSpec],
    replicas: Vec<u32>,
    stages: Vec<StageState>,
    events: BinaryHeap<Reverse<(Time, u64, Event)>>,
    seq: u64,
    source_remaining: u64,
    next_item: u64,
    sink_count: u64,
    total_queued: u64,
    peak_total_queued: u64,
    rng: ChaCha8Rng,
    jitter: ServiceJitter,
    now: f64,
    end_time: f64,
}

impl<'a> Sim<'a> {
    fn service_time(&mut self, stage: usize) -> f64 {
        let mean = self.specs[stage].service_time;
        match self.jitter {
            ServiceJitter::None => mean,
            ServiceJitter::Exponential => {
                let u: f64 = self.rng.gen_range(f64::MIN_POSITIVE..1.0);
                -mean * u.ln()
            }
        }
    }

    fn push_event(&mut self, at: f64, event: Event) {
        self.events.push(Reverse((Time(at), self.seq, event)));
        self.seq += 1;
    }

    /// Enqueues an item into `stage`. Barrier stages gather immediately
    /// instead of queueing. Returns stages that may now have runnable work.
    fn push_item(&mut self, stage: usize, item: u64, dirty: &mut VecDeque<usize>) {
        let state = &mut self.stages[stage];
        state.items_in += 1;
        if let Some(barrier) = state.barrier.as_mut() {
            debug_assert_eq!(barrier.state, BarrierState::Gathering);
            barrier.gathered.push_back(item);
            barrier.peak_gathered = barrier.peak_gathered.max(barrier.gathered.len() as u64);
            return;
        }
        state.queue.push_back(item);
        state.peak_queue = state.peak_queue.max(state.queue.len() as u64);
        self.total_queued += 1;
        self.peak_total_queued = self.peak_total_queued.max(self.total_queued);
        dirty.push_back(stage);
    }

    fn queue_has_space(&self, stage: usize) -> bool {
        // Barrier gatherers consume instantly; their inbox never fills.
        if self.stages[stage].barrier.is_some() {
            return true;
        }
        self.stages[stage].queue.len() < self.specs[stage].queue_capacity
    }

    /// A slot opened in `stage`'s queue (or the source may inject): admit
    /// one waiting item.
    fn refill(&mut self, stage: usize, dirty: &mut VecDeque<usize>) {
        if let Some((up_stage, up_replica, item)) = self.stages[stage].blocked_in.pop_front() {
            self.stages[up_stage].items_out += 1;
            if up_replica != BARRIER_EMITTER {
                self.stages[up_stage].idle.push(Reverse(up_replica));
                self.stages[up_stage].busy -= 1;
                dirty.push_back(up_stage);
            } else {
                dirty.push_back(up_stage); // barrier may have more to emit
            }
            self.push_item(stage, item, dirty);
        } else if stage == 0 && self.source_remaining > 0 {
            let item = self.next_item;
            self.next_item += 1;
            self.source_remaining -= 1;
            self.push_item(stage, item, dirty);
        }
    }

    /// Starts idle replicas on queued work and lets barriers emit.
    fn activate(&mut self, stage: usize, dirty: &mut VecDeque<usize>) {
        // Barrier in Emitted state drains its remaining output through the
        // normal blocked_in path of the downstream stage; handled in
        // emit_barrier_outputs.
        loop {
            let state = &self.stages[stage];
            if state.queue.is_empty() || state.idle.is_empty() {
                break;
            }
            self.stages[stage].queue.pop_front();
            self.total_queued -= 1;
            let Reverse(replica) = self.stages[stage].idle.pop().expect("nonempty");
            self.stages[stage].busy += 1;
            let duration = self.service_time(stage);
            self.stages[stage].busy_time += duration;
            let at = self.now + duration;
            self.push_event(at, Event::ReplicaDone { stage, replica });
            // A dequeue opened a slot: pull in blocked or source items.
            self.refill(stage, dirty);
        }
    }

    /// Hands `item` from `stage` to its downstream (or the sink). Returns
    /// false if the item is now parked on a full downstream queue.
    fn forward(
        &mut self,
        stage: usize,
        replica: u32,
        item: u64,
        dirty: &mut VecDeque<usize>,
    ) -> bool {
        if stage + 1 == self.specs.len() {
            self.stages[stage].items_out += 1;
            self.sink_count += 1;
            return true;
        }
        let next = stage + 1;
        if self.queue_has_space(next) {
            self.stages[stage].items_out += 1;
            self.push_item(next, item, dirty);
            true
        } else {
            self.stages[next].blocked_in.push_back((stage, replica, item));
            false
        }
    }

    /// True when every stage strictly upstream of `stage` has fully
    /// finished, including the source.
    fn upstream_done(&self, stage: usize) -> bool {
        if self.source_remaining > 0 {
            return false;
        }
        for j in 0..stage {
            let s = &self.stages[j];
            if !s.queue.is_empty() || s.busy > 0 || !s.blocked_in.is_empty() {
                return false;
            }
            if let Some(barrier) = &s.barrier {
                if barrier.state != BarrierState::Emitted || !barrier.gathered.is_empty() {
                    return false;
                }
            }
        }
        // Items parked on our own inbox also count as pending upstream work.
        self.stages[stage].blocked_in.is_empty()
    }

    /// Kicks off barrier processing once its upstream has drained.
    fn maybe_start_barrier(&mut self, stage: usize) {
        let ready = {
            let Some(barrier) = self.stages[stage].barrier.as_ref() else {
                return;
            };
            barrier.state == BarrierState::Gathering && self.upstream_done(stage)
        };
        if !ready {
            return;
        }
        let items = self.stages[stage].barrier.as_ref().expect("barrier").gathered.len();
        let replicas = f64::from(self.replicas[stage].max(1));
        let duration = if items == 0 {
            0.0
        } else {
            items as f64 * self.specs[stage].service_time / replicas
        };
        self.stages[stage].barrier.as_mut().expect("barrier").state = BarrierState::Processing;
        self.stages[stage].busy_time += duration;
        let at = self.now + duration;
        self.push_event(at, Event::BatchDone { stage });
    }

    /// Streams a finished barrier's outputs downstream, respecting
    /// backpressure by parking the overflow on the downstream inbox.
    fn emit_barrier_outputs(&mut self, stage: usize, dirty: &mut VecDeque<usize>) {
        loop {
            let state = &self.stages[stage];
            let Some(barrier) = state.barrier.as_ref() else {
                return;
            };
            if barrier.state != BarrierState::Emitted || barrier.gathered.is_empty() {
                return;
            }
            if stage + 1 == self.specs.len() {
                let barrier = self.stages[stage].barrier.as_mut().expect("barrier");
                let drained = barrier.gathered.len() as u64;
                barrier.gathered.clear();
                self.stages[stage].items_out += drained;
                self.sink_count += drained;
                return;
            }
            let next = stage + 1;
            let item = self.stages[stage]
                .barrier
                .as_mut()
                .expect("barrier")
                .gathered
                .pop_front()
                .expect("checked nonempty");
            if self.queue_has_space(next) {
                self.stages[stage].items_out += 1;
                self.push_item(next, item, dirty);
            } else {
                self.stages[next]
                    .blocked_in
                    .push_back((stage, BARRIER_EMITTER, item));
                return;
            }
        }
    }

    fn drain_dirty(&mut self, dirty: &mut VecDeque<usize>) {
        while let Some(stage) = dirty.pop_front() {
            self.activate(stage, dirty);
            self.emit_barrier_outputs(stage, dirty);
        }
        // Barrier readiness can only flip when the pipeline quiesces ahead
        // of it; check all barriers after the cascade settles.
        for stage in 0..self.specs.len() {
            if self.stages[stage].barrier.is_some() {
                self.maybe_start_barrier(stage);
            }
        }
    }
}

/// Simulates pulling `item_count` items through the chain.
pub fn simulate(
    specs: &[StageSpec],
    allocation: &Allocation,
    item_count: u64,
    options: SimOptions,
) -> Result<RunReport, PipelineError> {
    if specs.is_empty() {
        return Err(PipelineError::InvalidGraph("no stages".into()));
    }
    for spec in specs {
        spec.validate()?;
    }

    let replicas: Vec<u32> = specs
        .iter()
        .map(|s| match s.kind {
            StageKind::Barrier => 1,
            StageKind::Streaming => allocation.replicas_of(&s.name).max(1),
        })
        .collect();
    let stages: Vec<StageState> = specs
        .iter()
        .zip(&replicas)
        .map(|(spec, &r)| StageState {
            queue: VecDeque::new(),
            idle: (0..r).map(Reverse).collect(),
            blocked_in: VecDeque::new(),
            busy: 0,
            barrier: match spec.kind {
                StageKind::Barrier => Some(BarrierRuntime {
                    gathered: VecDeque::new(),
                    state: BarrierState::Gathering,
                    peak_gathered: 0,
                }),
                StageKind::Streaming => None,
            },
            items_in: 0,
            items_out: 0,
            peak_queue: 0,
            busy_time: 0.0,
        })
        .collect();

    let mut sim = Sim {
        specs,
        replicas,
        stages,
        events: BinaryHeap::new(),
        seq: 0,
        source_remaining: item_count,
        next_item: 0,
        sink_count: 0,
        total_queued: 0,
        peak_total_queued: 0,
        rng: ChaCha8Rng::seed_from_u64(options.seed),
        jitter: options.jitter,
        now: 0.0,
        end_time: 0.0,
    };

    // Prime the head queue from the source (a barrier head gathers the
    // entire source here, since its inbox never fills).
    let mut dirty = VecDeque::new();
    while sim.source_remaining > 0 && sim.queue_has_space(0) {
        let item = sim.next_item;
        sim.next_item += 1;
        sim.source_remaining -= 1;
        sim.push_item(0, item, &mut dirty);
    }
    sim.drain_dirty(&mut dirty);

    while let Some(Reverse((Time(at), _, event))) = sim.events.pop() {
        sim.now = at;
        sim.end_time = at;
        let mut dirty = VecDeque::new();
        match event {
            Event::ReplicaDone { stage, replica } => {
                // Items are interchangeable tokens; only counts matter.
                if sim.forward(stage, replica, 0, &mut dirty) {
                    sim.stages[stage].idle.push(Reverse(replica));
                    sim.stages[stage].busy -= 1;
                    dirty.push_back(stage);
                }
            }
            Event::BatchDone { stage } => {
                let barrier = sim.stages[stage].barrier.as_mut().expect("barrier event");
                barrier.state = BarrierState::Emitted;
                dirty.push_back(stage);
            }
        }
        sim.drain_dirty(&mut dirty);
    }

    let duration = sim.end_time;
    let stage_reports: Vec<StageReport> = specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let s = &sim.stages[i];
            StageReport {
                name: spec.name.clone(),
                replicas: sim.replicas[i],
                items_in: s.items_in,
                items_out: s.items_out,
                filtered: 0,
                failed: 0,
                retries: 0,
                peak_queue_depth: s.peak_queue,
                barrier_buffered_peak: s.barrier.as_ref().map(|b| b.peak_gathered).unwrap_or(0),
                utilization: if duration > 0.0 {
                    s.busy_time / (duration * f64::from(sim.replicas[i]))
                } else {
                    0.0
                },
            }
        })
        .collect();

    Ok(RunReport {
        mode: RunMode::Simulated,
        duration_seconds: duration,
        items_source: item_count - sim.source_remaining,
        items_sink: sim.sink_count,
        throughput_items_per_sec: if duration > 0.0 {
            sim.sink_count as f64 / duration
        } else {
            0.0
        },
        peak_total_buffered: sim.peak_total_queued,
        stages: stage_reports,
    })
}
