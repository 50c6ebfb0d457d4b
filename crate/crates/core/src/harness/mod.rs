//! Experiment orchestration: configuration, runs, checkpoints, evaluation
//! and plots.

pub mod checkpoint;
pub mod config;
pub mod evaluate;
pub mod plot;
pub mod run;

pub use checkpoint::Checkpoint;
pub use config::{ExperimentConfig, OUTPUT_ROOT_ENV};
pub use evaluate::{evaluate_baseline, evaluate_checkpoint, EvalSummary};
pub use run::{run_experiment, RunManifest, RunSummary};
