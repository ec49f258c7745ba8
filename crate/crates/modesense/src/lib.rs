//! Mobility-mode detection from passive WiFi sightings.
//!
//! This crate simulates a pair of roadside sensor pods watching devices
//! travel a street loop, turns the raw detection log into per-trip feature
//! vectors (speed, connection time, detection counts, and signal-strength
//! statistics), ranks those features with ReliefF, and trains and scores
//! four classifiers — a decision tree, bagged trees, a random forest, and a
//! small neural network — at telling walking, biking, and driving apart.
//!
//! The top-level entry points live in [`pipeline`]: six file-based stages
//! plus a one-shot [`pipeline::reproduce`] that chains them. Everything is
//! deterministic given the config seed; the same config produces
//! byte-identical artifacts on every run.

pub mod ensemble;
pub mod eval;
pub mod features;
pub mod io;
pub mod mlp;
pub mod model;
pub mod pipeline;
pub mod relieff;
pub mod seed;
pub mod sim;
pub mod split;
pub mod tree;
pub mod types;

pub use eval::{metrics, run_experiment, ConfusionMatrix, MetricsSummary, ModelSpec};
pub use features::{build_dataset, segment_trips, GapTable, FEATURE_SCHEMA};
pub use model::{lookup, registry, ModelStrategy, TrainedModel};
pub use pipeline::{load_config, reproduce, PipelineConfig, PipelineError};
pub use seed::RngSeed;
pub use sim::{simulate_experiment, SimConfig};
pub use types::{Dataset, DetectionRecord, Mode, TripObservation, FEATURE_COUNT};
