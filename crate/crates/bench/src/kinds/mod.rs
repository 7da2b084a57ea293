//! One runner per experiment kind. Each evaluates a single grid point for a
//! single seed.

mod inverse;
mod kalman;
mod mimo;
mod sequence;

use std::time::Instant;

use mbdl_sim::derive_seed;

use crate::config::{ExperimentConfig, ExperimentKind, GridPoint};
use crate::metrics::{Metric, MetricRecord};
use crate::BenchError;

pub(crate) struct Task<'a> {
    pub config: &'a ExperimentConfig,
    pub point: GridPoint,
    pub seed: u64,
    /// Seed of this (grid point, seed) pair; sub-streams derive from it.
    pub base: u64,
}

#[derive(Debug, Default)]
pub(crate) struct Outcome {
    pub metrics: Vec<MetricRecord>,
    pub timings: Vec<MetricRecord>,
}

impl Task<'_> {
    pub fn stream(&self, s: u64) -> u64 {
        derive_seed(self.base, s)
    }

    pub fn record(&self, method: &str, metric: Metric, value: f64, trials: usize) -> MetricRecord {
        MetricRecord::new(&self.config.id, method, self.point, metric, value, trials, self.seed)
    }

    pub fn ser(&self, method: &str, errors: usize, symbols: usize) -> MetricRecord {
        MetricRecord::ser(&self.config.id, method, self.point, errors, symbols, self.seed)
    }

    pub fn snr(&self) -> f64 {
        self.point.snr_db.expect("kind uses the SNR axis")
    }

    pub fn n_t(&self) -> usize {
        self.point.n_t.expect("kind uses the n_t axis")
    }

    pub fn q(&self) -> usize {
        self.point.q.expect("kind uses the Q axis")
    }

    pub fn epochs_or(&self, default: usize) -> usize {
        self.config.model.epochs.unwrap_or(default)
    }
}

impl Outcome {
    /// Runs `f`, recording its wall time for `method` in milliseconds.
    pub fn timed<T>(&mut self, task: &Task, method: &str, trials: usize, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        let ms = start.elapsed().as_secs_f64() * 1e3;
        self.timings.push(task.record(method, Metric::WallMs, ms, trials));
        out
    }
}

pub(crate) fn task_err(e: impl std::fmt::Display) -> BenchError {
    BenchError::Task(e.to_string())
}

pub(crate) fn run_task(task: &Task) -> Result<Outcome, BenchError> {
    match task.config.kind {
        ExperimentKind::Detnet => mimo::detnet(task),
        ExperimentKind::Deepsic => mimo::deepsic(task),
        ExperimentKind::LearnedFg => sequence::learned_fg(task),
        ExperimentKind::Dcea => inverse::dcea(task),
        ExperimentKind::Csgm => inverse::csgm(task),
        ExperimentKind::Pnp => inverse::pnp(task),
        ExperimentKind::Kalman => kalman::kalman(task),
    }
}
