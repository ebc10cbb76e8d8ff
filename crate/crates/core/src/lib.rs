//! Desk-scale video dataset curation engine.
//!
//! The library implements the five curation steps — splitting, filtering,
//! annotation, deduplication and sharding — plus a streaming orchestrator
//! that runs them as a pipeline of bounded-queue stages with resource-aware
//! autoscaling.
//!
//! Raw video enters and leaves the engine as YUV4MPEG2 streams; compressed
//! formats are handled by an external transcoder process behind a command
//! template contract. Neural models (boundary detectors, quality scorers,
//! captioners, embedders) are reached through client traits with
//! deterministic stubs, so the whole pipeline runs reproducibly without any
//! model weights.

pub mod annotate;
pub mod client;
pub mod dedup;
pub mod filters;
pub mod frame_io;
pub mod manifest;
pub mod orchestrator;
pub mod shard;
pub mod splitter;
pub mod synth;
