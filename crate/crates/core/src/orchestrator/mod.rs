//! Streaming execution of the stage graph.
//!
//! Stages communicate exclusively through bounded queues, so buffered
//! memory scales with pipeline shape, not dataset size. The scheduler packs
//! stage replicas onto nodes by multi-resource demand and grows the
//! bottleneck stage until nothing fits. Execution comes in two modes with
//! the same observable contract: live (real threads) and simulated
//! (single-threaded, virtual clock, bit-deterministic).

mod graph;
mod live;
mod report;
mod resource;
mod schedule;
mod sim;

pub use graph::PipelineDef;
pub use live::{run_pipeline, PipelineStage, StageLogic, StageOutput};
pub use report::{RunMode, RunReport, StageReport};
pub use resource::ResourceVector;
pub use schedule::{schedule, Allocation, NodeSpec, Placement, StageKind, StageSpec};
pub use sim::{simulate, ServiceJitter, SimOptions};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("infeasible allocation: {0}")]
    Infeasible(String),
    #[error("invalid stage graph: {0}")]
    InvalidGraph(String),
    #[error("invalid stage spec {0}: {1}")]
    InvalidStage(String, String),
}
