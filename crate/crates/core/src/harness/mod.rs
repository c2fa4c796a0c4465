//! Experiment driver: configuration, the six-cell evaluation grid, metrics
//! files, full runs and the exchange-rate search.

mod config;
mod eval;
mod ksearch;
mod metrics;
mod run;

pub use config::{CliOverrides, ExperimentConfig, AlgorithmSection, EnvSection, RunSection};
pub use eval::{coverage_entropy, evaluate, CellResult};
pub use ksearch::{k_search, KSearchRow, KSearchSummary};
pub use metrics::{read_metrics, read_pool_snapshots, MetricsRecord, PoolSnapshotRow};
pub use run::{load_policy, run, RunArtifacts, CHECKPOINT_DIR, FAILED_MARKER};
