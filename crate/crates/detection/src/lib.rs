//! Symbol detectors for memoryless MIMO channels.
//!
//! All detectors implement [`Detector`]: an observation vector in, symbol
//! indices (into the channel's constellation) out, with per-user PMFs when
//! the method produces them.

pub mod deepsic;
pub mod detnet;
pub mod error;
pub mod map;
pub mod pgd;
pub mod sic;

use mbdl_autodiff::Tensor;
use mbdl_sim::LabeledSet;
use nalgebra::DVector;

pub use deepsic::{AnalyticBlock, DeepSic, DeepSicTrainConfig, SoftBlock, TrainingMode};
pub use detnet::{DetNet, DetNetTrainConfig};
pub use error::DetectionError;
pub use map::{map_exhaustive, MapDetector};
pub use pgd::{pgd_detect, PgdDetector};
pub use sic::{sic_detect, GaussianSurrogate, SicDetector, SicOutput};

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub labels: Vec<usize>,
    pub pmfs: Option<Vec<Vec<f64>>>,
}

pub trait Detector: Send + Sync {
    fn detect(&self, x: &DVector<f64>) -> Detection;

    fn name(&self) -> &str;
}

/// Symbol errors over a labeled set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymbolErrors {
    pub errors: usize,
    pub symbols: usize,
}

impl SymbolErrors {
    pub fn rate(&self) -> f64 {
        self.errors as f64 / self.symbols as f64
    }

    pub fn merge(self, other: SymbolErrors) -> SymbolErrors {
        SymbolErrors {
            errors: self.errors + other.errors,
            symbols: self.symbols + other.symbols,
        }
    }
}

pub fn count_errors(detector: &dyn Detector, set: &LabeledSet) -> SymbolErrors {
    let mut errors = 0;
    let mut symbols = 0;
    for (x, labels) in set.x.iter().zip(&set.labels) {
        let d = detector.detect(x);
        errors += d.labels.iter().zip(labels).filter(|(a, b)| a != b).count();
        symbols += labels.len();
    }
    SymbolErrors { errors, symbols }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Stacks observation vectors into a `[n, N]` tensor.
pub fn stack_rows(rows: &[DVector<f64>]) -> Tensor {
    let cols = rows[0].len();
    let mut data = Vec::with_capacity(rows.len() * cols);
    for r in rows {
        data.extend(r.iter());
    }
    Tensor::matrix(rows.len(), cols, data)
}
