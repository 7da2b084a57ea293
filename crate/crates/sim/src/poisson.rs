use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::constellation::Constellation;
use crate::error::SimError;
use crate::gaussian::LabeledSet;
use crate::rng::seeded;

/// Memoryless MIMO channel with independent Poisson observations,
/// `x_i ~ Poisson(λ_i)`, `λ = 1 + √ρ · H · m(s)` where `m` maps the smallest
/// symbol to 0 and the largest to 1. The unit offset keeps every rate
/// positive and reduces the channel to unit-rate noise at `ρ = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonChannel {
    h: DMatrix<f64>,
    rho: f64,
    constellation: Constellation,
}

impl PoissonChannel {
    pub fn new(h: DMatrix<f64>, rho: f64, constellation: Constellation) -> Result<Self, SimError> {
        if h.nrows() == 0 || h.ncols() == 0 {
            return Err(SimError::InvalidModel("channel matrix must be non-empty".into()));
        }
        if h.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(SimError::InvalidModel("Poisson channel matrix must be non-negative".into()));
        }
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(SimError::InvalidModel(format!("ρ must be non-negative, got {rho}")));
        }
        Ok(Self {
            h,
            rho,
            constellation,
        })
    }

    pub fn bpsk(h: DMatrix<f64>, rho: f64) -> Result<Self, SimError> {
        Self::new(h, rho, Constellation::bpsk())
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    pub fn n_rx(&self) -> usize {
        self.h.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.h.ncols()
    }

    pub fn rate(&self, s: &DVector<f64>) -> DVector<f64> {
        let m = s.map(|v| self.constellation.unit_level(v));
        (&self.h * m * self.rho.sqrt()).add_scalar(1.0)
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<LabeledSet, SimError> {
        let mut rng = seeded(seed);
        let (k, levels) = (self.n_users(), self.constellation.len());
        let mut set = LabeledSet::default();
        for _ in 0..n {
            let labels: Vec<usize> = (0..k).map(|_| rng.random_range(0..levels)).collect();
            let s = DVector::from_iterator(k, labels.iter().map(|&i| self.constellation.symbol(i)));
            let rate = self.rate(&s);
            let mut x = DVector::zeros(self.n_rx());
            for (xi, &lam) in x.iter_mut().zip(rate.iter()) {
                *xi = poisson_draw(lam, &mut rng)?;
            }
            set.x.push(x);
            set.s.push(s);
            set.labels.push(labels);
        }
        Ok(set)
    }
}

/// One draw from `Poisson(rate)`; the rate must be positive and finite.
pub fn poisson_draw<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<f64, SimError> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(SimError::InvalidModel(format!("Poisson rate must be positive, got {rate}")));
    }
    let d = Poisson::new(rate).map_err(|e| SimError::InvalidModel(e.to_string()))?;
    Ok(d.sample(rng))
}

/// `ln P(X = x)` for `X ~ Poisson(rate)` and a non-negative integer `x`.
pub fn poisson_log_pmf(x: f64, rate: f64) -> f64 {
    let k = x.round() as u64;
    let log_fact: f64 = (2..=k).map(|i| (i as f64).ln()).sum();
    k as f64 * rate.ln() - rate - log_fact
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_signal_has_unit_rate() {
        let ch = PoissonChannel::bpsk(DMatrix::from_element(3, 2, 0.7), 9.0).unwrap();
        let r = ch.rate(&DVector::from_vec(vec![-1.0, -1.0]));
        assert!(r.iter().all(|&v| v == 1.0));
        let r = ch.rate(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(r.iter().all(|&v| (v - (1.0 + 3.0 * 0.7)).abs() < 1e-15));
    }

    #[test]
    fn rejects_negative_matrix() {
        assert!(PoissonChannel::bpsk(DMatrix::from_element(1, 1, -0.1), 1.0).is_err());
    }

    #[test]
    fn log_pmf_matches_direct_formula() {
        let direct = (-2.5f64).exp() * 2.5f64.powi(3) / 6.0;
        assert!((poisson_log_pmf(3.0, 2.5) - direct.ln()).abs() < 1e-12);
        assert!((poisson_log_pmf(0.0, 1.0) + 1.0).abs() < 1e-15);
    }
}
