//! Experiment harness: configuration files, runs and comparisons.

pub mod compare;
pub mod config;
pub mod run;

pub use compare::{compare_runs, Comparison, MissingMetric};
pub use config::{CalibrationConfig, EnvConfig, ExperimentConfig, Outer, ScheduleConfig, Task};
pub use run::{execute, exit_code, output_dir, run_to_dir, synthetic_target, Manifest, RunResult, TrainedGame};
