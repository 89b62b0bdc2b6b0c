//! Experiment plumbing: data ingestion, synthetic problems, configuration,
//! metrics files and the training loop. The only part of the crate that
//! touches the file system.

pub mod config;
pub mod idx;
pub mod metrics;
pub mod runner;
pub mod synth;

pub use config::{ActivationKind, Experiment, ExperimentConfig, OptimizerKind};
pub use idx::{load_idx, parse_idx};
pub use metrics::{to_csv, write_csv, MetricsRow, CSV_HEADER};
pub use runner::{
    build_model, build_optimizer, evaluate, grid_search, grid_search_with, invert_pixels,
    load_dataset, run_experiment, select_best, train_on, Dataset, GridCell, GridReport,
    RunSummary,
};
pub use synth::{gen_matfac, MatfacProblem};
