use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::constellation::Constellation;
use crate::error::SimError;
use crate::rng::seeded;

/// `x = H s + w`, `w ~ N(0, σ² I)`, `s` uniform over `S^K`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMimoChannel {
    h: DMatrix<f64>,
    sigma: f64,
    constellation: Constellation,
}

/// Paired symbols and observations. `labels[t][k]` indexes the constellation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledSet {
    pub s: Vec<DVector<f64>>,
    pub labels: Vec<Vec<usize>>,
    pub x: Vec<DVector<f64>>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Rows `range` as a new set.
    pub fn slice(&self, range: std::ops::Range<usize>) -> LabeledSet {
        LabeledSet {
            s: self.s[range.clone()].to_vec(),
            labels: self.labels[range.clone()].to_vec(),
            x: self.x[range].to_vec(),
        }
    }
}

impl GaussianMimoChannel {
    pub fn new(h: DMatrix<f64>, sigma: f64, constellation: Constellation) -> Result<Self, SimError> {
        if h.nrows() == 0 || h.ncols() == 0 {
            return Err(SimError::InvalidModel("channel matrix must be non-empty".into()));
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(SimError::InvalidModel("channel matrix has non-finite entries".into()));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(SimError::InvalidModel(format!("noise std must be positive, got {sigma}")));
        }
        Ok(Self {
            h,
            sigma,
            constellation,
        })
    }

    pub fn bpsk(h: DMatrix<f64>, sigma: f64) -> Result<Self, SimError> {
        Self::new(h, sigma, Constellation::bpsk())
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    /// Receive dimension `N`.
    pub fn n_rx(&self) -> usize {
        self.h.nrows()
    }

    /// Number of users `K`.
    pub fn n_users(&self) -> usize {
        self.h.ncols()
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self, SimError> {
        Self::new(self.h.clone(), sigma, self.constellation.clone())
    }

    pub fn symbols(&self, labels: &[usize]) -> DVector<f64> {
        DVector::from_iterator(labels.len(), labels.iter().map(|&i| self.constellation.symbol(i)))
    }

    /// Draws `n` labeled pairs.
    pub fn sample(&self, n: usize, seed: u64) -> LabeledSet {
        let mut rng = seeded(seed);
        let noise = Normal::new(0.0, self.sigma).expect("valid std");
        let (k, m) = (self.n_users(), self.constellation.len());
        let mut set = LabeledSet::default();
        for _ in 0..n {
            let labels: Vec<usize> = (0..k).map(|_| rng.random_range(0..m)).collect();
            let s = self.symbols(&labels);
            let w = DVector::from_iterator(self.n_rx(), (0..self.n_rx()).map(|_| noise.sample(&mut rng)));
            set.x.push(&self.h * &s + w);
            set.s.push(s);
            set.labels.push(labels);
        }
        set
    }

    /// Copy whose matrix has entries `H_ij (1 + ε z_ij)`, `z_ij ~ N(0, 1)`.
    /// Used to model imperfect channel knowledge.
    pub fn perturbed<R: Rng + ?Sized>(&self, epsilon: f64, rng: &mut R) -> Self {
        let h = self.h.map(|v| {
            let z: f64 = StandardNormal.sample(rng);
            v * (1.0 + epsilon * z)
        });
        Self {
            h,
            ..self.clone()
        }
    }
}

/// `N×K` matrix with i.i.d. `N(0, 1/N)` entries, so each receive element
/// carries unit signal power when `K = N`.
pub fn gaussian_matrix<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> DMatrix<f64> {
    let d = Normal::new(0.0, (1.0 / n as f64).sqrt()).expect("valid std");
    // Row-major draw order keeps the matrix independent of nalgebra's layout.
    let mut data = Vec::with_capacity(n * k);
    for _ in 0..n * k {
        data.push(d.sample(rng));
    }
    DMatrix::from_row_slice(n, k, &data)
}

/// `H_ij = exp(-|i - j|)`: a fixed, well-conditioned, non-negative channel.
pub fn exponential_decay_matrix(n: usize, k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, k, |i, j| (-(i as f64 - j as f64).abs()).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_noise() {
        assert!(GaussianMimoChannel::bpsk(DMatrix::identity(2, 2), 0.0).is_err());
        assert!(GaussianMimoChannel::bpsk(DMatrix::identity(2, 2), f64::NAN).is_err());
    }

    #[test]
    fn noiseless_limit() {
        let ch = GaussianMimoChannel::bpsk(DMatrix::identity(3, 3), 1e-12).unwrap();
        let set = ch.sample(50, 1);
        for (s, x) in set.s.iter().zip(&set.x) {
            assert!((s - x).amax() < 1e-9);
        }
    }

    #[test]
    fn labels_match_symbols() {
        let ch = GaussianMimoChannel::bpsk(DMatrix::identity(2, 2), 1.0).unwrap();
        let set = ch.sample(20, 3);
        for (s, l) in set.s.iter().zip(&set.labels) {
            assert_eq!(s, &ch.symbols(l));
        }
    }
}
