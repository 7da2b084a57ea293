use serde::{Deserialize, Serialize};

use crate::error::SimError;

/// A finite set of real symbols. Index order defines every tie-break.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constellation {
    points: Vec<f64>,
}

impl Constellation {
    pub fn new(points: Vec<f64>) -> Result<Self, SimError> {
        if points.is_empty() {
            return Err(SimError::InvalidModel("empty constellation".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(SimError::InvalidModel("non-finite constellation point".into()));
        }
        for (i, a) in points.iter().enumerate() {
            if points[i + 1..].contains(a) {
                return Err(SimError::InvalidModel(format!("duplicate symbol {a}")));
            }
        }
        Ok(Self { points })
    }

    /// `{-1, +1}`.
    pub fn bpsk() -> Self {
        Self {
            points: vec![-1.0, 1.0],
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn symbol(&self, index: usize) -> f64 {
        self.points[index]
    }

    /// Index of the closest symbol, lowest index on ties.
    pub fn nearest(&self, v: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, &p) in self.points.iter().enumerate() {
            let d = (v - p).abs();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    /// Maps a symbol onto `[0, 1]`: the smallest symbol to 0, the largest to 1.
    /// For BPSK this is `-1 → 0`, `+1 → 1`.
    pub fn unit_level(&self, v: f64) -> f64 {
        let lo = self.points.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.points.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi == lo {
            1.0
        } else {
            (v - lo) / (hi - lo)
        }
    }

    /// Decodes a mixed-radix index (first symbol least significant) into
    /// `len` symbol indices.
    pub fn decode_index(&self, mut index: usize, len: usize) -> Vec<usize> {
        let m = self.len();
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            out.push(index % m);
            index /= m;
        }
        out
    }
}

impl Default for Constellation {
    fn default() -> Self {
        Self::bpsk()
    }
}
