//! Experiment harness: declarative configs, Monte-Carlo sweeps over SNR,
//! data-size and iteration grids, CSV metrics, plot scripts and comparison
//! reports.
//!
//! ```no_run
//! use mbdl_bench::{run_experiment, ExperimentConfig};
//! use std::path::Path;
//!
//! let cfg = ExperimentConfig::load(Path::new("configs/detnet.toml")).unwrap();
//! let summary = run_experiment(&cfg, Path::new("results")).unwrap();
//! println!("{} rows in {}", summary.rows, summary.metrics.display());
//! ```

pub mod config;
mod aggregate;
mod kinds;
pub mod metrics;
pub mod plots;
pub mod report;
pub mod run;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{ChannelKind, ExperimentConfig, ExperimentKind, Grid, GridPoint, ModelParams};
pub use metrics::{read_metrics, wilson_interval, write_metrics, Metric, MetricRecord, COLUMNS};
pub use plots::{emit_plots, PlotSummary};
pub use report::{compare_report, Baselines};
pub use run::{collect_metrics, run_experiment, RunSummary, CONFIG_FILE, METRICS_FILE, TIMINGS_FILE};

/// Environment variable naming the root that relative output directories
/// resolve against.
pub const OUTPUT_ROOT_VAR: &str = "MBDL_OUTPUT_ROOT";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("metric file lacks column `{0}`")]
    MissingColumn(String),
    #[error("no metric files under {0}")]
    NoMetrics(PathBuf),
    #[error("invalid metric row: {0}")]
    InvalidRecord(String),
    #[error("baseline `{baseline}` for `{method}` is absent from {experiment}")]
    BaselineAbsent {
        experiment: String,
        method: String,
        baseline: String,
    },
    #[error("task failed: {0}")]
    Task(String),
    #[error("{failed} of {total} tasks failed, partial results in {dir}; first failure: {first}")]
    Partial {
        failed: usize,
        total: usize,
        dir: PathBuf,
        first: String,
    },
}

impl BenchError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.to_owned(),
            source,
        }
    }
}
