//! Run reporting shared by the live and simulated executors.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Live,
    Simulated,
}

/// Per-stage accounting. Conservation holds for every stage at the end of a
/// run: `items_in = items_out + filtered + failed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub name: String,
    pub replicas: u32,
    pub items_in: u64,
    pub items_out: u64,
    pub filtered: u64,
    pub failed: u64,
    pub retries: u64,
    pub peak_queue_depth: u64,
    /// Peak item count gathered by a barrier stage (0 for streaming stages).
    pub barrier_buffered_peak: u64,
    /// Busy fraction of the stage's replicas over the run.
    pub utilization: f64,
}

impl StageReport {
    pub fn conserved(&self) -> bool {
        self.items_in == self.items_out + self.filtered + self.failed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: RunMode,
    pub duration_seconds: f64,
    pub items_source: u64,
    pub items_sink: u64,
    pub throughput_items_per_sec: f64,
    /// Peak of the total queued-item count across all stages, sampled at
    /// every queue push. Bounded by the sum of queue capacities.
    pub peak_total_buffered: u64,
    pub stages: Vec<StageReport>,
}

impl RunReport {
    pub fn all_conserved(&self) -> bool {
        self.stages.iter().all(StageReport::conserved)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
