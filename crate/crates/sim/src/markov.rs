//! Stationary finite-memory sequence channels.
//!
//! A state `s̄_i = (s_{i-J}, …, s_{i-1})` is stored as a mixed-radix index in
//! which the most recent symbol is the least significant digit:
//! `index = Σ_{l=1..J} idx(s_{i-l}) · |S|^(l-1)`.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::constellation::Constellation;
use crate::error::SimError;
use crate::poisson::{poisson_draw, poisson_log_pmf};
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq)]
pub enum Emission {
    /// `x_i = Σ_l taps[l] · s_{i-l} + w_i`, `w_i ~ N(0, σ²)`.
    GaussianIsi { taps: Vec<f64>, sigma: f64 },
    /// `x_i ~ Poisson(1 + √ρ · Σ_l taps[l] · m(s_{i-l}))`.
    PoissonIsi { taps: Vec<f64>, rho: f64 },
}

impl Emission {
    pub fn taps(&self) -> &[f64] {
        match self {
            Emission::GaussianIsi { taps, .. } | Emission::PoissonIsi { taps, .. } => taps,
        }
    }
}

/// `exp(-γ l)` for `l = 0..=memory`.
pub fn exponential_taps(memory: usize, gamma: f64) -> Vec<f64> {
    (0..=memory).map(|l| (-gamma * l as f64).exp()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovSequenceModel {
    memory: usize,
    constellation: Constellation,
    /// `|S|^J` rows of `|S|` probabilities `P(s_i | s̄_i)`.
    transitions: Vec<Vec<f64>>,
    emission: Emission,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovSample {
    /// The `J` symbols preceding `s_1`, oldest first.
    pub initial: Vec<usize>,
    /// Symbol indices `s_1..s_T`.
    pub labels: Vec<usize>,
    pub s: Vec<f64>,
    pub x: Vec<f64>,
}

impl MarkovSequenceModel {
    pub fn new(
        memory: usize,
        constellation: Constellation,
        transitions: Vec<Vec<f64>>,
        emission: Emission,
    ) -> Result<Self, SimError> {
        if memory == 0 {
            return Err(SimError::InvalidModel("memory must be at least 1".into()));
        }
        let m = constellation.len();
        let states = m.pow(memory as u32);
        if transitions.len() != states {
            return Err(SimError::InvalidModel(format!(
                "expected {states} transition rows, got {}",
                transitions.len()
            )));
        }
        for (i, row) in transitions.iter().enumerate() {
            if row.len() != m || row.iter().any(|&p| !(p >= 0.0)) {
                return Err(SimError::InvalidModel(format!("transition row {i} is not a distribution")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(SimError::InvalidModel(format!("transition row {i} sums to {total}")));
            }
        }
        if emission.taps().len() != memory + 1 {
            return Err(SimError::InvalidModel(format!(
                "memory {memory} needs {} taps, got {}",
                memory + 1,
                emission.taps().len()
            )));
        }
        match &emission {
            Emission::GaussianIsi { sigma, .. } if !(*sigma > 0.0) => {
                return Err(SimError::InvalidModel("emission noise std must be positive".into()))
            }
            Emission::PoissonIsi { taps, rho } if !(*rho >= 0.0) || taps.iter().any(|&t| t < 0.0) => {
                return Err(SimError::InvalidModel("Poisson emission needs ρ ≥ 0 and taps ≥ 0".into()))
            }
            _ => {}
        }
        Ok(Self {
            memory,
            constellation,
            transitions,
            emission,
        })
    }

    /// i.i.d. uniform symbols.
    pub fn uniform(memory: usize, constellation: Constellation, emission: Emission) -> Result<Self, SimError> {
        let m = constellation.len();
        let rows = vec![vec![1.0 / m as f64; m]; m.pow(memory as u32)];
        Self::new(memory, constellation, rows, emission)
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    pub fn transitions(&self) -> &[Vec<f64>] {
        &self.transitions
    }

    pub fn emission(&self) -> &Emission {
        &self.emission
    }

    pub fn with_emission(&self, emission: Emission) -> Result<Self, SimError> {
        Self::new(self.memory, self.constellation.clone(), self.transitions.clone(), emission)
    }

    pub fn num_states(&self) -> usize {
        self.constellation.len().pow(self.memory as u32)
    }

    /// State index of the window `(s_{i-J}, …, s_{i-1})` given oldest first.
    pub fn state_index(&self, window: &[usize]) -> usize {
        debug_assert_eq!(window.len(), self.memory);
        let m = self.constellation.len();
        window.iter().rev().fold((0, 1), |(acc, w), &s| (acc + s * w, w * m)).0
    }

    /// Inverse of [`state_index`](Self::state_index), oldest first.
    pub fn state_window(&self, index: usize) -> Vec<usize> {
        let mut w = self.constellation.decode_index(index, self.memory);
        w.reverse();
        w
    }

    /// State reached from `state` after emitting symbol `next`.
    pub fn next_state(&self, state: usize, next: usize) -> usize {
        let m = self.constellation.len();
        let states = self.num_states();
        (state * m + next) % states
    }

    /// Noiseless emission mean (Gaussian) or rate (Poisson) for the window
    /// `(s_{i-J}, …, s_i)`, oldest first.
    pub fn emission_mean(&self, window: &[usize]) -> f64 {
        let taps = self.emission.taps();
        let j = self.memory;
        match &self.emission {
            Emission::GaussianIsi { .. } => (0..=j)
                .map(|l| taps[l] * self.constellation.symbol(window[j - l]))
                .sum(),
            Emission::PoissonIsi { rho, .. } => {
                let sig: f64 = (0..=j)
                    .map(|l| taps[l] * self.constellation.unit_level(self.constellation.symbol(window[j - l])))
                    .sum();
                1.0 + rho.sqrt() * sig
            }
        }
    }

    /// `p(x_i | s_{i-J}, …, s_i)`.
    pub fn likelihood(&self, x: f64, window: &[usize]) -> f64 {
        self.log_likelihood(x, window).exp()
    }

    pub fn log_likelihood(&self, x: f64, window: &[usize]) -> f64 {
        let mean = self.emission_mean(window);
        match &self.emission {
            Emission::GaussianIsi { sigma, .. } => {
                let z = (x - mean) / sigma;
                -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
            Emission::PoissonIsi { .. } => poisson_log_pmf(x, mean),
        }
    }

    pub fn sample(&self, t: usize, seed: u64) -> Result<MarkovSample, SimError> {
        if t == 0 {
            return Err(SimError::InvalidArgument("sequence length must be positive".into()));
        }
        let mut rng = seeded(seed);
        let m = self.constellation.len();
        let initial: Vec<usize> = (0..self.memory).map(|_| rng.random_range(0..m)).collect();
        let mut window = initial.clone();
        let mut state = self.state_index(&initial);
        let mut labels = Vec::with_capacity(t);
        let mut x = Vec::with_capacity(t);
        let gauss = match &self.emission {
            Emission::GaussianIsi { sigma, .. } => Some(Normal::new(0.0, *sigma).expect("valid std")),
            Emission::PoissonIsi { .. } => None,
        };
        for _ in 0..t {
            let u: f64 = rng.random();
            let row = &self.transitions[state];
            let mut next = m - 1;
            let mut acc = 0.0;
            for (k, &p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    next = k;
                    break;
                }
            }
            // Guard against a zero-probability tail chosen by rounding.
            while row[next] == 0.0 && next > 0 {
                next -= 1;
            }
            window.push(next);
            let mean = self.emission_mean(&window[window.len() - self.memory - 1..]);
            let xi = match &gauss {
                Some(n) => mean + n.sample(&mut rng),
                None => poisson_draw(mean, &mut rng)?,
            };
            labels.push(next);
            x.push(xi);
            state = self.next_state(state, next);
        }
        let s = labels.iter().map(|&l| self.constellation.symbol(l)).collect();
        Ok(MarkovSample { initial, labels, s, x })
    }

    /// Stationary distribution over symbols for `J = 1` by power iteration.
    pub fn stationary_symbol_distribution(&self, iterations: usize) -> Vec<f64> {
        let states = self.num_states();
        let m = self.constellation.len();
        let mut pi = vec![1.0 / states as f64; states];
        for _ in 0..iterations {
            let mut next = vec![0.0; states];
            for (st, &p) in pi.iter().enumerate() {
                for (sym, &q) in self.transitions[st].iter().enumerate() {
                    next[self.next_state(st, sym)] += p * q;
                }
            }
            pi = next;
        }
        // Marginal of the most recent symbol.
        let mut out = vec![0.0; m];
        for (st, &p) in pi.iter().enumerate() {
            out[st % m] += p;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(memory: usize) -> MarkovSequenceModel {
        MarkovSequenceModel::uniform(
            memory,
            Constellation::bpsk(),
            Emission::GaussianIsi {
                taps: exponential_taps(memory, 0.2),
                sigma: 0.5,
            },
        )
        .unwrap()
    }

    #[test]
    fn state_indexing_round_trips() {
        let m = model(3);
        for idx in 0..m.num_states() {
            assert_eq!(m.state_index(&m.state_window(idx)), idx);
        }
        // (s_{i-3}, s_{i-2}, s_{i-1}) = (1, 0, 0): oldest symbol is most significant.
        assert_eq!(m.state_index(&[1, 0, 0]), 4);
        assert_eq!(m.state_index(&[0, 0, 1]), 1);
    }

    #[test]
    fn next_state_shifts_window() {
        let m = model(2);
        let st = m.state_index(&[1, 0]);
        assert_eq!(m.state_window(m.next_state(st, 1)), vec![0, 1]);
    }

    #[test]
    fn rejects_bad_rows() {
        let e = Emission::GaussianIsi { taps: vec![1.0, 0.5], sigma: 1.0 };
        assert!(MarkovSequenceModel::new(1, Constellation::bpsk(), vec![vec![0.5, 0.6], vec![0.5, 0.5]], e.clone()).is_err());
        assert!(MarkovSequenceModel::new(1, Constellation::bpsk(), vec![vec![1.0, 0.0]], e).is_err());
    }

    #[test]
    fn emission_mean_uses_most_recent_first_tap() {
        let m = MarkovSequenceModel::uniform(
            1,
            Constellation::bpsk(),
            Emission::GaussianIsi { taps: vec![1.0, 0.5], sigma: 1.0 },
        )
        .unwrap();
        // window (s_{i-1}, s_i) = (-1, +1): 1·(+1) + 0.5·(-1)
        assert_eq!(m.emission_mean(&[0, 1]), 0.5);
    }
}
