//! Denoisers and plug-and-play ADMM.

use mbdl_autodiff::{bindings, fit, Activation, FitConfig, Graph, Mlp, Optimizer, OptimizerConfig, Params, Tensor};
use mbdl_sim::seeded;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::InverseError;
use crate::lasso::{admm_core, AdmmStep};
use crate::soft_threshold_vec;

/// A map `(signal, noise level) → signal`. Closures with that signature
/// qualify.
pub trait Denoiser: Send + Sync {
    fn denoise(&self, v: &DVector<f64>, noise_level: f64) -> DVector<f64>;
}

impl<F> Denoiser for F
where
    F: Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync,
{
    fn denoise(&self, v: &DVector<f64>, noise_level: f64) -> DVector<f64> {
        self(v, noise_level)
    }
}

/// Fixed shrinkage; ignores the noise level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftThresholdDenoiser {
    pub threshold: f64,
}

impl Denoiser for SoftThresholdDenoiser {
    fn denoise(&self, v: &DVector<f64>, _: f64) -> DVector<f64> {
        soft_threshold_vec(v, self.threshold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdentityDenoiser;

impl Denoiser for IdentityDenoiser {
    fn denoise(&self, v: &DVector<f64>, _: f64) -> DVector<f64> {
        v.clone()
    }
}

/// Residual MLP: `D(v, σ) = v + f([v, σ])`.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedDenoiser {
    mlp: Mlp,
    params: Params,
}

fn denoiser_mlp(n: usize, hidden: &[usize]) -> Mlp {
    let mut sizes = vec![n + 1];
    sizes.extend_from_slice(hidden);
    sizes.push(n);
    Mlp::new("denoiser", &sizes, Activation::Relu, Activation::Identity)
}

impl LearnedDenoiser {
    pub fn from_params(n: usize, hidden: &[usize], params: Params) -> Result<Self, InverseError> {
        let mlp = denoiser_mlp(n, hidden);
        for l in 0..mlp.layers() {
            for name in [mlp.weight_name(l), mlp.bias_name(l)] {
                if !params.contains_key(&name) {
                    return Err(InverseError::InvalidParameter(format!("missing parameter {name}")));
                }
            }
        }
        Ok(Self { mlp, params })
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.mlp.param_count()
    }

    pub fn signal_len(&self) -> usize {
        self.mlp.sizes[0] - 1
    }

    /// `v` is `[B, N]`, `sigma` holds one level per row.
    pub fn denoise_batch(&self, v: &Tensor, sigma: &[f64]) -> Tensor {
        let input = with_level(v, sigma);
        let r = self.mlp.forward(&self.params, &input);
        v.zip_map(&r, |a, b| a + b)
    }
}

fn with_level(v: &Tensor, sigma: &[f64]) -> Tensor {
    let (rows, n) = (v.rows(), v.cols());
    let mut data = Vec::with_capacity(rows * (n + 1));
    for (r, s) in sigma.iter().enumerate().take(rows) {
        data.extend_from_slice(v.row(r));
        data.push(*s);
    }
    Tensor::matrix(rows, n + 1, data)
}

impl Denoiser for LearnedDenoiser {
    fn denoise(&self, v: &DVector<f64>, noise_level: f64) -> DVector<f64> {
        let t = Tensor::matrix(1, v.len(), v.iter().copied().collect());
        DVector::from_vec(self.denoise_batch(&t, &[noise_level]).into_data())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserTrainConfig {
    pub hidden: Vec<usize>,
    /// Noisy copies drawn per clean signal.
    pub copies: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl Default for DenoiserTrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            copies: 8,
            epochs: 60,
            batch_size: 64,
            optimizer: OptimizerConfig::adam(2e-3),
            seed: 0,
        }
    }
}

/// Supervised MSE training on `(clean + N(0, σ²), clean)` pairs, `σ` drawn
/// uniformly from `levels`. Returns the denoiser and per-epoch mean loss
/// (squared error summed over a signal, averaged over signals).
pub fn train_denoiser(
    clean: &[DVector<f64>],
    levels: &[f64],
    config: &DenoiserTrainConfig,
) -> Result<(LearnedDenoiser, Vec<f64>), InverseError> {
    let n = clean.first().ok_or_else(|| InverseError::InvalidParameter("empty corpus".into()))?.len();
    if levels.is_empty() || levels.iter().any(|s| !(*s >= 0.0)) {
        return Err(InverseError::InvalidParameter("noise levels must be non-negative and non-empty".into()));
    }
    if clean.iter().any(|c| c.len() != n) {
        return Err(InverseError::Shape("clean signals differ in length".into()));
    }
    let mut rng = seeded(config.seed);
    let mlp = denoiser_mlp(n, &config.hidden);
    let params = mlp.init_params(&mut rng);

    let rows = clean.len() * config.copies.max(1);
    let (mut noisy, mut target, mut sig) = (Vec::with_capacity(rows * n), Vec::with_capacity(rows * n), Vec::new());
    for _ in 0..config.copies.max(1) {
        for c in clean {
            let s = levels[rng.random_range(0..levels.len())];
            for &v in c.iter() {
                let e: f64 = StandardNormal.sample(&mut rng);
                noisy.push(v + s * e);
                target.push(v);
            }
            sig.push(s);
        }
    }
    let noisy = Tensor::matrix(rows, n, noisy);
    let data = bindings([
        ("x", with_level(&noisy, &sig)),
        ("v", noisy),
        ("clean", Tensor::matrix(rows, n, target)),
    ]);

    let mut g = Graph::new();
    let x = g.input("x");
    let v = g.input("v");
    let clean_in = g.input("clean");
    let r = mlp.build(&mut g, x, &params);
    let out = g.add(v, r);
    let loss = g.mse(out, clean_in);
    g.set_output(loss);
    let mut opt = Optimizer::new(config.optimizer);
    let fit_cfg = FitConfig {
        epochs: config.epochs,
        batch_size: config.batch_size,
    };
    let losses = fit(&mut g, &data, fit_cfg, &mut opt, &mut rng)?;
    Ok((
        LearnedDenoiser {
            mlp,
            params: g.params().clone(),
        },
        losses,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PnpResult {
    pub estimate: DVector<f64>,
    pub steps: Vec<AdmmStep>,
}

/// ADMM with step 3 replaced by `denoiser(ŝ + u, schedule[q])` for a fixed
/// budget of `iters` iterations. The last schedule entry repeats when the
/// schedule is shorter than the budget.
pub fn pnp_admm(
    x: &DVector<f64>,
    h: &DMatrix<f64>,
    alpha: f64,
    denoiser: &dyn Denoiser,
    schedule: &[f64],
    iters: usize,
) -> Result<PnpResult, InverseError> {
    if schedule.is_empty() {
        return Err(InverseError::InvalidParameter("empty noise-level schedule".into()));
    }
    let level = |q: usize| schedule[q.min(schedule.len() - 1)];
    let (steps, _) = admm_core(h, x, alpha, |z, q| denoiser.denoise(z, level(q)), None, iters)?;
    let estimate = steps.last().map_or_else(|| DVector::zeros(h.ncols()), |s| s.s.clone());
    Ok(PnpResult { estimate, steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closures_are_denoisers() {
        let halve = |v: &DVector<f64>, _: f64| v * 0.5;
        let d: &dyn Denoiser = &halve;
        assert_eq!(d.denoise(&DVector::from_vec(vec![2.0]), 0.0)[0], 1.0);
    }

    #[test]
    fn zero_network_is_identity() {
        let mlp = denoiser_mlp(4, &[3]);
        let d = LearnedDenoiser::from_params(4, &[3], mlp.zero_params()).unwrap();
        let v = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        assert_eq!(d.denoise(&v, 0.3), v);
    }

    #[test]
    fn missing_parameters_are_rejected() {
        assert!(LearnedDenoiser::from_params(4, &[3], Params::new()).is_err());
    }

    #[test]
    fn schedule_must_be_nonempty() {
        let x = DVector::from_vec(vec![1.0]);
        let r = pnp_admm(&x, &DMatrix::identity(1, 1), 1.0, &IdentityDenoiser, &[], 3);
        assert!(r.is_err());
    }
}
