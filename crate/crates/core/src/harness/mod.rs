//! Experiment orchestration: configuration, datasets, cross-validation,
//! sweeps, timing benchmarks and the real-time simulation.

pub mod bench;
pub mod config;
pub mod dataset;
pub mod experiments;
pub mod metrics;
pub mod pipeline;
pub mod realtime;

pub use config::{EstimatorKind, FieldSource, RunConfig};
pub use experiments::{cross_validate, sweep, write_sweep_csv, CaseReport};
pub use metrics::{error_epsilon, error_offset_normalized};
