use mbdl_sim::GaussianMimoChannel;
use nalgebra::{DMatrix, DVector};

use crate::{Detection, Detector};

/// Projected gradient descent on `||x - H s||²`:
/// `ŝ ← P_S(ŝ - η Hᵀ(H ŝ - x))`, where `P_S` maps each entry to the nearest
/// symbol (element-wise sign for BPSK). Returns symbol indices of the final
/// iterate; with `iterations = 0` the initial guess is projected.
pub fn pgd_detect(
    x: &DVector<f64>,
    channel: &GaussianMimoChannel,
    eta: f64,
    iterations: usize,
    initial: &DVector<f64>,
) -> Vec<usize> {
    let h = channel.h();
    let ht = h.transpose();
    run(&ht, &(&ht * h), x, channel, eta, iterations, initial)
}

fn run(
    ht: &DMatrix<f64>,
    gram: &DMatrix<f64>,
    x: &DVector<f64>,
    channel: &GaussianMimoChannel,
    eta: f64,
    iterations: usize,
    initial: &DVector<f64>,
) -> Vec<usize> {
    let c = channel.constellation();
    let htx = ht * x;
    let mut s = initial.clone();
    for _ in 0..iterations {
        let step = &s - (gram * &s - &htx) * eta;
        s = step.map(|v| c.symbol(c.nearest(v)));
    }
    s.iter().map(|&v| c.nearest(v)).collect()
}

#[derive(Debug, Clone)]
pub struct PgdDetector {
    channel: GaussianMimoChannel,
    ht: DMatrix<f64>,
    gram: DMatrix<f64>,
    pub eta: f64,
    pub iterations: usize,
    pub initial: DVector<f64>,
}

impl PgdDetector {
    pub fn new(channel: GaussianMimoChannel, eta: f64, iterations: usize) -> Self {
        let ht = channel.h().transpose();
        let gram = &ht * channel.h();
        // A tiny positive start keeps the first projection away from the
        // sign(0) tie.
        let initial = DVector::from_element(channel.n_users(), 1e-6);
        Self {
            channel,
            ht,
            gram,
            eta,
            iterations,
            initial,
        }
    }
}

impl Detector for PgdDetector {
    fn detect(&self, x: &DVector<f64>) -> Detection {
        Detection {
            labels: run(&self.ht, &self.gram, x, &self.channel, self.eta, self.iterations, &self.initial),
            pmfs: None,
        }
    }

    fn name(&self) -> &str {
        "pgd"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_channel_converges_in_one_step() {
        let ch = GaussianMimoChannel::bpsk(DMatrix::identity(3, 3), 1.0).unwrap();
        let s = DVector::from_vec(vec![1.0, -1.0, -1.0]);
        let init = DVector::from_vec(vec![1e-3, 1e-3, -1e-3]);
        assert_eq!(pgd_detect(&s, &ch, 0.5, 1, &init), vec![1, 0, 0]);
    }

    #[test]
    fn zero_step_returns_projected_guess() {
        let ch = GaussianMimoChannel::bpsk(DMatrix::identity(2, 2), 1.0).unwrap();
        let init = DVector::from_vec(vec![-0.3, 2.0]);
        let x = DVector::from_vec(vec![5.0, -5.0]);
        assert_eq!(pgd_detect(&x, &ch, 0.0, 10, &init), vec![0, 1]);
    }
}
