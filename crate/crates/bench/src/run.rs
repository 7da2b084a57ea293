//! Grid execution and metric persistence.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;

use mbdl_sim::derive_seed;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, GridPoint};
use crate::kinds::{run_task, Outcome, Task};
use crate::metrics::{MetricRecord, MetricWriter};
use crate::BenchError;

pub const METRICS_FILE: &str = "metrics.csv";
/// Wall times live apart from the metrics so that `metrics.csv` stays
/// byte-identical across reruns.
pub const TIMINGS_FILE: &str = "timings.csv";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub metrics: PathBuf,
    pub timings: PathBuf,
    pub tasks: usize,
    pub rows: usize,
}

impl fmt::Display for GridPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(v) = self.snr_db {
            parts.push(format!("snr_db={v}"));
        }
        if let Some(v) = self.n_t {
            parts.push(format!("n_t={v}"));
        }
        if let Some(v) = self.q {
            parts.push(format!("q={v}"));
        }
        if let Some(v) = self.m {
            parts.push(format!("m={v}"));
        }
        f.write_str(&parts.join(" "))
    }
}

fn tasks(config: &ExperimentConfig) -> Vec<Task<'_>> {
    let mut out = Vec::new();
    for (i, point) in config.points().into_iter().enumerate() {
        for &seed in &config.seeds {
            out.push(Task {
                config,
                point,
                seed,
                base: derive_seed(seed, i as u64),
            });
        }
    }
    out
}

/// Runs every task in parallel and feeds results to `sink` on the calling
/// thread in task order, whatever order they finish in.
fn execute<F>(config: &ExperimentConfig, mut sink: F) -> Result<usize, BenchError>
where
    F: FnMut(&Task, Result<Outcome, BenchError>) -> Result<(), BenchError>,
{
    config.validate()?;
    let tasks = tasks(config);
    let (tx, rx) = mpsc::channel();
    thread::scope(|s| {
        let all = &tasks;
        s.spawn(move || {
            all.par_iter().enumerate().for_each_with(tx, |tx, (i, t)| {
                // The receiver only goes away when the sink has failed.
                let _ = tx.send((i, run_task(t)));
            });
        });
        let mut pending = BTreeMap::new();
        let mut next = 0;
        for (i, r) in rx {
            pending.insert(i, r);
            while let Some(r) = pending.remove(&next) {
                sink(&tasks[next], r)?;
                next += 1;
            }
        }
        Ok(tasks.len())
    })
}

fn validated(outcome: Result<Outcome, BenchError>) -> Result<Outcome, BenchError> {
    let outcome = outcome?;
    for r in outcome.metrics.iter().chain(&outcome.timings) {
        r.validate()?;
    }
    Ok(outcome)
}

/// Runs the grid in memory and returns the metric rows (no wall times) in
/// task order. Any task failure fails the whole call.
pub fn collect_metrics(config: &ExperimentConfig) -> Result<Vec<MetricRecord>, BenchError> {
    let mut rows = Vec::new();
    execute(config, |task, r| {
        let o = validated(r).map_err(|e| BenchError::Task(format!("{} seed {}: {e}", task.point, task.seed)))?;
        rows.extend(o.metrics);
        Ok(())
    })?;
    Ok(rows)
}

/// Runs the grid and writes `metrics.csv`, `timings.csv` and a normalized
/// copy of the config into the config's output directory under `root`.
/// Rows are flushed as soon as every earlier task has reported, so a failed
/// run leaves the completed rows on disk and returns
/// [`BenchError::Partial`].
pub fn run_experiment(config: &ExperimentConfig, root: &Path) -> Result<RunSummary, BenchError> {
    config.validate()?;
    let dir = config.output_dir(root);
    std::fs::create_dir_all(&dir).map_err(|e| BenchError::io(&dir, e))?;
    let config_path = dir.join(CONFIG_FILE);
    std::fs::write(&config_path, config.to_toml()).map_err(|e| BenchError::io(&config_path, e))?;
    let metrics = dir.join(METRICS_FILE);
    let timings = dir.join(TIMINGS_FILE);
    let mut mw = MetricWriter::create(&metrics)?;
    let mut tw = MetricWriter::create(&timings)?;
    let mut rows = 0;
    let mut failures = Vec::new();
    let total = execute(config, |task, r| {
        match validated(r) {
            Ok(o) => {
                mw.write(&o.metrics)?;
                tw.write(&o.timings)?;
                rows += o.metrics.len();
            }
            Err(e) => failures.push(format!("{} seed {}: {e}", task.point, task.seed)),
        }
        Ok(())
    })?;
    if let Some(first) = failures.first() {
        return Err(BenchError::Partial {
            failed: failures.len(),
            total,
            dir,
            first: first.clone(),
        });
    }
    Ok(RunSummary {
        dir,
        metrics,
        timings,
        tasks: total,
        rows,
    })
}
