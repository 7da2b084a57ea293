//! Experiment configuration files.
//!
//! A config is a TOML document with three top-level keys and two tables:
//!
//! ```toml
//! id = "deepsic-gaussian"
//! kind = "deepsic"            # detnet | deepsic | dcea | csgm | pnp | learned-fg | kalman
//! seeds = [0, 1, 2]
//! output = "fig-6a"           # optional, defaults to `id`
//!
//! [grid]
//! snr_db = [0.0, 2.0, 4.0]
//! train_sizes = [5000]
//!
//! [model]
//! channel = "gaussian"
//! test_symbols = 100000
//! ```
//!
//! Grid axes are `snr_db`, `train_sizes` (n_t), `iterations` (Q) and
//! `measurements` (M). Each kind has one required axis; the others fall back
//! to a single default point. Unused axes are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Detnet,
    Deepsic,
    Dcea,
    Csgm,
    Pnp,
    LearnedFg,
    Kalman,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    SnrDb,
    TrainSizes,
    Iterations,
    Measurements,
}

impl Axis {
    pub fn key(self) -> &'static str {
        match self {
            Axis::SnrDb => "snr_db",
            Axis::TrainSizes => "train_sizes",
            Axis::Iterations => "iterations",
            Axis::Measurements => "measurements",
        }
    }
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Detnet => "detnet",
            ExperimentKind::Deepsic => "deepsic",
            ExperimentKind::Dcea => "dcea",
            ExperimentKind::Csgm => "csgm",
            ExperimentKind::Pnp => "pnp",
            ExperimentKind::LearnedFg => "learned-fg",
            ExperimentKind::Kalman => "kalman",
        }
    }

    /// The axis a config must populate.
    pub fn required_axis(self) -> Axis {
        match self {
            ExperimentKind::Detnet | ExperimentKind::Deepsic | ExperimentKind::LearnedFg => Axis::SnrDb,
            ExperimentKind::Dcea | ExperimentKind::Kalman => Axis::TrainSizes,
            ExperimentKind::Csgm | ExperimentKind::Pnp => Axis::Measurements,
        }
    }

    pub fn uses(self, axis: Axis) -> bool {
        use Axis::*;
        match self {
            ExperimentKind::Detnet | ExperimentKind::Deepsic => matches!(axis, SnrDb | TrainSizes | Iterations),
            ExperimentKind::LearnedFg => matches!(axis, SnrDb | TrainSizes),
            ExperimentKind::Dcea | ExperimentKind::Kalman => matches!(axis, TrainSizes | Iterations),
            ExperimentKind::Csgm => matches!(axis, Measurements | TrainSizes),
            ExperimentKind::Pnp => matches!(axis, Measurements | TrainSizes | Iterations),
        }
    }

    fn default_train_size(self) -> usize {
        match self {
            ExperimentKind::Detnet | ExperimentKind::Deepsic | ExperimentKind::LearnedFg => 5000,
            ExperimentKind::Dcea => 200,
            ExperimentKind::Csgm => 1000,
            ExperimentKind::Pnp => 400,
            ExperimentKind::Kalman => 2000,
        }
    }

    fn default_iterations(self) -> usize {
        match self {
            ExperimentKind::Detnet | ExperimentKind::Dcea => 10,
            ExperimentKind::Deepsic => 5,
            ExperimentKind::Pnp | ExperimentKind::Kalman => 20,
            ExperimentKind::LearnedFg | ExperimentKind::Csgm => 0,
        }
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub snr_db: Vec<f64>,
    pub train_sizes: Vec<usize>,
    pub iterations: Vec<usize>,
    pub measurements: Vec<usize>,
}

impl Grid {
    fn len_of(&self, axis: Axis) -> usize {
        match axis {
            Axis::SnrDb => self.snr_db.len(),
            Axis::TrainSizes => self.train_sizes.len(),
            Axis::Iterations => self.iterations.len(),
            Axis::Measurements => self.measurements.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelKind {
    #[default]
    Gaussian,
    Poisson,
}

/// Kind-specific knobs. Every field has a default; `None` means the kind's
/// own default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub channel: ChannelKind,
    pub users: usize,
    pub receivers: usize,
    /// Seed of the fixed random channel matrix (Gaussian MIMO only).
    pub channel_seed: u64,
    /// Symbols (users × vectors, or sequence length) evaluated per grid
    /// point and seed.
    pub test_symbols: usize,
    pub pgd_iters: usize,
    /// Overrides the training epochs of every learned method.
    pub epochs: Option<usize>,
    /// Channel memory J for sequence detection.
    pub memory: usize,
    pub block_len: usize,
    pub signal_len: Option<usize>,
    pub latent: usize,
    /// Test signals or trajectories per grid point and seed.
    pub trials: Option<usize>,
    /// Measurement noise std for csgm and pnp.
    pub noise_std: Option<f64>,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            channel: ChannelKind::Gaussian,
            users: 4,
            receivers: 4,
            channel_seed: 0,
            test_symbols: 10_000,
            pgd_iters: 100,
            epochs: None,
            memory: 4,
            block_len: 1000,
            signal_len: None,
            latent: 4,
            trials: None,
            noise_std: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    pub kind: ExperimentKind,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default)]
    pub model: ModelParams,
}

/// One point of the grid. Axes a kind does not use are `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GridPoint {
    pub snr_db: Option<f64>,
    pub n_t: Option<usize>,
    pub q: Option<usize>,
    pub m: Option<usize>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, BenchError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |msg: String| Err(BenchError::Config(msg));
        if self.id.is_empty() || self.id.contains(['/', '\\', ',']) {
            return bad(format!("id `{}` must be non-empty without separators or commas", self.id));
        }
        if self.seeds.is_empty() {
            return bad("no seeds".into());
        }
        let required = self.kind.required_axis();
        if self.grid.len_of(required) == 0 {
            return bad(format!("{} needs a non-empty grid.{}", self.kind, required.key()));
        }
        for axis in [Axis::SnrDb, Axis::TrainSizes, Axis::Iterations, Axis::Measurements] {
            if self.grid.len_of(axis) > 0 && !self.kind.uses(axis) {
                return bad(format!("{} does not use grid.{}", self.kind, axis.key()));
            }
        }
        if self.grid.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("SNR values must be finite".into());
        }
        if self.grid.train_sizes.contains(&0) || self.grid.measurements.contains(&0) {
            return bad("train sizes and measurement counts must be positive".into());
        }
        if self.grid.iterations.contains(&0) {
            return bad("iteration counts must be positive".into());
        }
        let m = &self.model;
        if m.users == 0 || m.receivers == 0 || m.test_symbols == 0 || m.block_len == 0 || m.latent == 0 {
            return bad("model sizes must be positive".into());
        }
        if m.trials == Some(0) || m.epochs == Some(0) {
            return bad("trials and epochs must be positive".into());
        }
        if m.channel == ChannelKind::Poisson
            && !matches!(self.kind, ExperimentKind::Deepsic | ExperimentKind::LearnedFg)
        {
            return bad(format!("{} has no Poisson variant", self.kind));
        }
        Ok(())
    }

    /// Cartesian product of the axes in a fixed order: SNR outermost, then
    /// n_t, Q and M.
    pub fn points(&self) -> Vec<GridPoint> {
        let kind = self.kind;
        let axis_or = |values: &[usize], axis: Axis, default: usize| -> Vec<Option<usize>> {
            if !kind.uses(axis) {
                vec![None]
            } else if values.is_empty() {
                vec![Some(default)]
            } else {
                values.iter().map(|&v| Some(v)).collect()
            }
        };
        let snrs: Vec<Option<f64>> = if kind.uses(Axis::SnrDb) {
            self.grid.snr_db.iter().map(|&s| Some(s)).collect()
        } else {
            vec![None]
        };
        let sizes = axis_or(&self.grid.train_sizes, Axis::TrainSizes, kind.default_train_size());
        let iters = axis_or(&self.grid.iterations, Axis::Iterations, kind.default_iterations());
        let meas = axis_or(&self.grid.measurements, Axis::Measurements, 0);
        let mut out = Vec::new();
        for &snr_db in &snrs {
            for &n_t in &sizes {
                for &q in &iters {
                    for &m in &meas {
                        out.push(GridPoint { snr_db, n_t, q, m });
                    }
                }
            }
        }
        out
    }

    /// Result directory under `root`.
    pub fn output_dir(&self, root: &Path) -> PathBuf {
        root.join(self.output.clone().unwrap_or_else(|| PathBuf::from(&self.id)))
    }
}
