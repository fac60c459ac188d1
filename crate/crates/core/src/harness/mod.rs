//! Experiment harness: configs, seeded replication, CSV output,
//! aggregation, grid tuning and the built-in property suite.

pub mod aggregate;
pub mod check;
pub mod config;
mod measure;
pub mod run;
pub mod tune;

pub use aggregate::{aggregate, aggregate_dir, AggregateRow, TrajectoryRow};
pub use check::{check, CheckReport, CheckResult};
pub use config::{ExperimentConfig, ProblemSpec};
pub use measure::measure_stationarity;
pub use run::{resolve_output_dir, run_experiment, Manifest, Outcome, OUTPUT_DIR_ENV};
pub use tune::{standard_batch_grid, standard_stepsize_grid, parse_grid_arg, tune, TuneReport};
