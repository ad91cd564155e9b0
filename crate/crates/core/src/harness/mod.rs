//! Experiment orchestration: configuration, runs, grid search, statistics and tables.

pub mod config;
pub mod grid;
pub mod learner;
pub mod metrics;
pub mod run;
pub mod stats;
pub mod table;

pub use config::{AlgorithmId, Experiment, ExperimentConfig};
pub use grid::{grid_score, grid_search, select_best, GridOutcome};
pub use metrics::{format_sig, read_metrics, MetricsRow, CSV_HEADER};
pub use run::{run_experiment, run_seed, seed_performance};
pub use stats::{welch_t_test, WelchResult};
pub use table::{build_table, collect_performances, ComparisonTable};
