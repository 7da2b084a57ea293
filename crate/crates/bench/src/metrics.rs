//! Metric rows and their CSV form.
//!
//! Column order is fixed:
//!
//! `experiment,method,snr_db,n_t,q,m,metric,value,ci_low,ci_high,trials,seed`
//!
//! Grid columns a kind does not use are empty. `ci_low`/`ci_high` hold the
//! 95% Wilson interval for SER rows and are empty otherwise. `trials` is the
//! number of symbols (SER) or test signals/trajectories (MSE) behind the
//! value.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::GridPoint;
use crate::BenchError;

pub const COLUMNS: [&str; 12] = [
    "experiment",
    "method",
    "snr_db",
    "n_t",
    "q",
    "m",
    "metric",
    "value",
    "ci_low",
    "ci_high",
    "trials",
    "seed",
];

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "SER")]
    Ser,
    #[serde(rename = "MSE")]
    Mse,
    #[serde(rename = "objective")]
    Objective,
    #[serde(rename = "params")]
    Params,
    #[serde(rename = "wall-ms")]
    WallMs,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Ser => "SER",
            Metric::Mse => "MSE",
            Metric::Objective => "objective",
            Metric::Params => "params",
            Metric::WallMs => "wall-ms",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub experiment: String,
    pub method: String,
    pub snr_db: Option<f64>,
    pub n_t: Option<usize>,
    pub q: Option<usize>,
    pub m: Option<usize>,
    pub metric: Metric,
    pub value: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl MetricRecord {
    pub fn new(experiment: &str, method: &str, point: GridPoint, metric: Metric, value: f64, trials: usize, seed: u64) -> Self {
        Self {
            experiment: experiment.to_owned(),
            method: method.to_owned(),
            snr_db: point.snr_db,
            n_t: point.n_t,
            q: point.q,
            m: point.m,
            metric,
            value,
            ci_low: None,
            ci_high: None,
            trials,
            seed,
        }
    }

    /// SER row with its Wilson interval.
    pub fn ser(experiment: &str, method: &str, point: GridPoint, errors: usize, symbols: usize, seed: u64) -> Self {
        let (lo, hi) = wilson_interval(errors, symbols, Z95);
        Self {
            ci_low: Some(lo),
            ci_high: Some(hi),
            ..Self::new(experiment, method, point, Metric::Ser, errors as f64 / symbols as f64, symbols, seed)
        }
    }

    pub fn point(&self) -> GridPoint {
        GridPoint {
            snr_db: self.snr_db,
            n_t: self.n_t,
            q: self.q,
            m: self.m,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.trials == 0 {
            return Err(BenchError::InvalidRecord(format!("{} {}: zero trials", self.method, self.metric.name())));
        }
        if !self.value.is_finite() {
            return Err(BenchError::InvalidRecord(format!("{} {}: non-finite value", self.method, self.metric.name())));
        }
        if self.metric == Metric::Ser && !(0.0..=1.0).contains(&self.value) {
            return Err(BenchError::InvalidRecord(format!("{}: SER {} outside [0, 1]", self.method, self.value)));
        }
        Ok(())
    }
}

/// Wilson score interval for `successes` out of `trials` at normal quantile
/// `z`. `(0, 1)` when there are no trials.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // The bounds at p̂ = 0 and p̂ = 1 are exactly 0 and 1; rounding would
    // leave them a few ulps off.
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes >= trials { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Writes rows to a CSV stream with the fixed header. Rows are validated
/// before they are written.
pub struct MetricWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl MetricWriter<File> {
    pub fn create(path: &Path) -> Result<Self, BenchError> {
        let file = File::create(path).map_err(|e| BenchError::io(path, e))?;
        Self::new(file)
    }
}

impl<W: Write> MetricWriter<W> {
    pub fn new(sink: W) -> Result<Self, BenchError> {
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(sink);
        inner.write_record(COLUMNS)?;
        inner.flush().map_err(|e| BenchError::io(Path::new("<metrics>"), e))?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, rows: &[MetricRecord]) -> Result<(), BenchError> {
        for r in rows {
            r.validate()?;
            self.inner.serialize(r)?;
        }
        self.inner.flush().map_err(|e| BenchError::io(Path::new("<metrics>"), e))
    }

    pub fn into_inner(self) -> Result<W, BenchError> {
        self.inner
            .into_inner()
            .map_err(|e| BenchError::Task(format!("flushing metrics: {}", e.error())))
    }
}

pub fn write_metrics(path: &Path, rows: &[MetricRecord]) -> Result<(), BenchError> {
    MetricWriter::create(path)?.write(rows)
}

/// Reads a metric CSV. Fails naming the first expected column that the
/// header lacks.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricRecord>, BenchError> {
    let file = File::open(path).map_err(|e| BenchError::io(path, e))?;
    parse_metrics(file)
}

pub fn parse_metrics<R: std::io::Read>(source: R) -> Result<Vec<MetricRecord>, BenchError> {
    let mut reader = csv::Reader::from_reader(source);
    let header = reader.headers()?.clone();
    if let Some(missing) = COLUMNS.iter().find(|c| !header.iter().any(|h| h == **c)) {
        return Err(BenchError::MissingColumn((*missing).to_owned()));
    }
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        let r: MetricRecord = row?;
        r.validate()?;
        rows.push(r);
    }
    Ok(rows)
}
