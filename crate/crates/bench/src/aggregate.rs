//! Loading metric files and pooling rows over seeds.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::metrics::{read_metrics, wilson_interval, Metric, MetricRecord, Z95};
use crate::BenchError;

/// `*.csv` files in `dir` and its immediate subdirectories, sorted.
pub(crate) fn find_metric_files(dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    let mut out = Vec::new();
    let entries = |d: &Path| -> Result<Vec<PathBuf>, BenchError> {
        let mut v: Vec<PathBuf> = std::fs::read_dir(d)
            .map_err(|e| BenchError::io(d, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        v.sort();
        Ok(v)
    };
    let is_csv = |p: &Path| p.is_file() && p.extension().is_some_and(|e| e == "csv");
    for p in entries(dir)? {
        if is_csv(&p) {
            out.push(p);
        } else if p.is_dir() {
            out.extend(entries(&p)?.into_iter().filter(|q| is_csv(q)));
        }
    }
    Ok(out)
}

pub(crate) fn load_all(dir: &Path) -> Result<Vec<MetricRecord>, BenchError> {
    let files = find_metric_files(dir)?;
    if files.is_empty() {
        return Err(BenchError::NoMetrics(dir.to_owned()));
    }
    let mut rows = Vec::new();
    for f in files {
        rows.extend(read_metrics(&f)?);
    }
    Ok(rows)
}

/// Grid coordinates with the SNR quantized to 1e-9 dB so the key orders
/// and compares exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub(crate) struct PointKey {
    pub snr: Option<i64>,
    pub n_t: Option<usize>,
    pub q: Option<usize>,
    pub m: Option<usize>,
}

impl PointKey {
    pub fn of(r: &MetricRecord) -> Self {
        Self {
            snr: r.snr_db.map(|s| (s * 1e9).round() as i64),
            n_t: r.n_t,
            q: r.q,
            m: r.m,
        }
    }

    pub fn snr_db(&self) -> Option<f64> {
        self.snr.map(|s| s as f64 / 1e9)
    }

    pub fn axis(&self, axis: usize) -> Option<f64> {
        match axis {
            0 => self.snr_db(),
            1 => self.n_t.map(|v| v as f64),
            2 => self.q.map(|v| v as f64),
            _ => self.m.map(|v| v as f64),
        }
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if let Some(v) = self.snr_db() {
            parts.push(format!("snr_db={v}"));
        }
        for (name, v) in [("n_t", self.n_t), ("q", self.q), ("m", self.m)] {
            if let Some(v) = v {
                parts.push(format!("{name}={v}"));
            }
        }
        parts.join(" ")
    }
}

pub(crate) const AXIS_NAMES: [&str; 4] = ["snr_db", "n_t", "q", "m"];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) struct SeriesKey {
    pub experiment: String,
    pub metric: Metric,
    pub method: String,
    pub point: PointKey,
}

/// One (experiment, metric, method, point) pooled over seeds.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Pooled {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
    pub trials: usize,
    /// Per-seed values, sorted by seed.
    pub per_seed: Vec<(u64, f64)>,
}

/// SER pools errors and symbols and recomputes the Wilson interval. Other
/// metrics take the trial-weighted mean with the seed range as the band.
pub(crate) fn pool(rows: &[MetricRecord]) -> BTreeMap<SeriesKey, Pooled> {
    let mut groups: BTreeMap<SeriesKey, Vec<&MetricRecord>> = BTreeMap::new();
    for r in rows {
        let key = SeriesKey {
            experiment: r.experiment.clone(),
            metric: r.metric,
            method: r.method.clone(),
            point: PointKey::of(r),
        };
        groups.entry(key).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(k, rs)| {
            let trials: usize = rs.iter().map(|r| r.trials).sum();
            let mut per_seed: Vec<(u64, f64)> = rs.iter().map(|r| (r.seed, r.value)).collect();
            per_seed.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
            let pooled = if k.metric == Metric::Ser {
                let errors: usize = rs.iter().map(|r| (r.value * r.trials as f64).round() as usize).sum();
                let (lo, hi) = wilson_interval(errors, trials, Z95);
                Pooled {
                    value: errors as f64 / trials as f64,
                    lo,
                    hi,
                    trials,
                    per_seed,
                }
            } else {
                let value = rs.iter().map(|r| r.value * r.trials as f64).sum::<f64>() / trials as f64;
                let lo = rs.iter().map(|r| r.value).fold(f64::INFINITY, f64::min);
                let hi = rs.iter().map(|r| r.value).fold(f64::NEG_INFINITY, f64::max);
                Pooled {
                    value,
                    lo,
                    hi,
                    trials,
                    per_seed,
                }
            };
            (k, pooled)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::GridPoint;

    fn pt(snr: f64) -> GridPoint {
        GridPoint {
            snr_db: Some(snr),
            ..Default::default()
        }
    }

    #[test]
    fn ser_pools_errors_over_seeds() {
        let rows = vec![
            MetricRecord::ser("e", "sic", pt(2.0), 10, 100, 0),
            MetricRecord::ser("e", "sic", pt(2.0), 30, 300, 1),
        ];
        let p = pool(&rows);
        let (_, v) = p.iter().next().unwrap();
        assert_eq!(v.trials, 400);
        assert!((v.value - 0.1).abs() < 1e-15);
        assert_eq!(v.per_seed, vec![(0, 0.1), (1, 0.1)]);
        assert_eq!((v.lo, v.hi), wilson_interval(40, 400, Z95));
    }

    #[test]
    fn mse_band_is_seed_range() {
        let rows = vec![
            MetricRecord::new("e", "csgm", pt(0.0), Metric::Mse, 1.0, 10, 0),
            MetricRecord::new("e", "csgm", pt(0.0), Metric::Mse, 3.0, 30, 1),
        ];
        let v = pool(&rows).into_values().next().unwrap();
        assert_eq!((v.value, v.lo, v.hi), (2.5, 1.0, 3.0));
    }
}
