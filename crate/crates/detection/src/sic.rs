use mbdl_sim::{GaussianMimoChannel, PoissonChannel};
use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::DetectionError;
use crate::{argmax, Detection, Detector};

#[derive(Debug, Clone, PartialEq)]
pub struct SicOutput {
    pub labels: Vec<usize>,
    /// Final per-user PMFs over the constellation.
    pub pmfs: Vec<Vec<f64>>,
}

/// Mean and variance of a symbol drawn from `pmf`.
pub(crate) fn moments(points: &[f64], pmf: &[f64]) -> (f64, f64) {
    let mean: f64 = points.iter().zip(pmf).map(|(a, p)| a * p).sum();
    let second: f64 = points.iter().zip(pmf).map(|(a, p)| a * a * p).sum();
    (mean, (second - mean * mean).max(0.0))
}

pub(crate) fn normalize_log(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Iterative soft interference cancellation with a uniform prior.
///
/// Each iteration replaces every user's PMF at once: the other users'
/// soft symbols are subtracted from `x`, their residual variance is folded
/// into the noise covariance, and the Gaussian likelihood of each candidate
/// symbol is normalized into a PMF. Starts from uniform PMFs; zero
/// iterations decide from the uniform PMFs.
pub fn sic_detect(
    x: &DVector<f64>,
    channel: &GaussianMimoChannel,
    iterations: usize,
) -> Result<SicOutput, DetectionError> {
    let h = channel.h();
    let users = channel.n_users();
    let points = channel.constellation().points();
    let m = points.len();
    let noise = channel.sigma() * channel.sigma();
    let mut pmfs = vec![vec![1.0 / m as f64; m]; users];
    for _ in 0..iterations {
        let stats: Vec<(f64, f64)> = pmfs.iter().map(|p| moments(points, p)).collect();
        let mut next = Vec::with_capacity(users);
        for k in 0..users {
            let mut z = x.clone();
            let mut cov = DMatrix::identity(x.len(), x.len()) * noise;
            for (l, &(mean, var)) in stats.iter().enumerate() {
                if l == k {
                    continue;
                }
                let hl = h.column(l);
                z -= hl * mean;
                cov += hl * hl.transpose() * var;
            }
            let chol = Cholesky::new(cov).ok_or(DetectionError::SingularCovariance { user: k })?;
            let logits: Vec<f64> = points
                .iter()
                .map(|&a| {
                    let r = &z - h.column(k) * a;
                    let w = chol.l().solve_lower_triangular(&r).expect("nonzero diagonal");
                    -0.5 * w.norm_squared()
                })
                .collect();
            next.push(normalize_log(&logits));
        }
        pmfs = next;
    }
    Ok(SicOutput {
        labels: pmfs.iter().map(|p| argmax(p)).collect(),
        pmfs,
    })
}

/// Gaussian stand-in for a Poisson MIMO channel, for running SIC with a
/// mismatched model: SIC sees `x - offset` as `H s + w`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSurrogate {
    pub channel: GaussianMimoChannel,
    pub offset: DVector<f64>,
}

impl GaussianSurrogate {
    /// The receiver simply assumes the linear Gaussian model with the
    /// Poisson channel's matrix and noise level `sigma`.
    pub fn assumed(p: &PoissonChannel, sigma: f64) -> Result<Self, DetectionError> {
        let channel = GaussianMimoChannel::new(p.h().clone(), sigma, p.constellation().clone())?;
        Ok(Self {
            channel,
            offset: DVector::zeros(p.n_rx()),
        })
    }

    /// First-moment fit that knows the rate law: the affine rate
    /// `1 + √ρ·H·m(s)` becomes `offset + H_eff s`, with the noise variance
    /// set to the average rate.
    pub fn moment_matched(p: &PoissonChannel) -> Result<Self, DetectionError> {
        let c = p.constellation();
        let lo = c.points().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = c.points().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let gain = p.rho().sqrt() / span;
        let h_eff = p.h() * gain;
        let ones = DVector::from_element(p.n_users(), 1.0);
        let offset = (p.h() * &ones) * (-gain * lo) + DVector::from_element(p.n_rx(), 1.0);
        let mean_symbol = c.points().iter().sum::<f64>() / c.len() as f64;
        let mean_rate = (&offset + &h_eff * (ones * mean_symbol)).mean();
        let channel = GaussianMimoChannel::new(h_eff, mean_rate.sqrt(), c.clone())?;
        Ok(Self { channel, offset })
    }
}

#[derive(Debug, Clone)]
pub struct SicDetector {
    channel: GaussianMimoChannel,
    offset: Option<DVector<f64>>,
    pub iterations: usize,
    label: String,
}

impl SicDetector {
    pub fn new(channel: GaussianMimoChannel, iterations: usize) -> Result<Self, DetectionError> {
        if channel.sigma() <= 0.0 {
            return Err(DetectionError::InvalidConfig("SIC needs a positive noise level".into()));
        }
        Ok(Self {
            channel,
            offset: None,
            iterations,
            label: "sic".into(),
        })
    }

    /// SIC run on the Gaussian surrogate of a Poisson channel.
    pub fn mismatched(surrogate: GaussianSurrogate, iterations: usize) -> Result<Self, DetectionError> {
        let mut d = Self::new(surrogate.channel, iterations)?;
        d.offset = Some(surrogate.offset);
        d.label = "sic-mismatched".into();
        Ok(d)
    }

    pub fn run(&self, x: &DVector<f64>) -> SicOutput {
        let shifted;
        let x = match &self.offset {
            Some(o) => {
                shifted = x - o;
                &shifted
            }
            None => x,
        };
        sic_detect(x, &self.channel, self.iterations).expect("positive noise keeps covariances definite")
    }
}

impl Detector for SicDetector {
    fn detect(&self, x: &DVector<f64>) -> Detection {
        let out = self.run(x);
        Detection {
            labels: out.labels,
            pmfs: Some(out.pmfs),
        }
    }

    fn name(&self) -> &str {
        &self.label
    }
}
