//! Convolutional sparse coding under Poisson noise: `log μ = H s` with a
//! block-Toeplitz dictionary `H` and sparse `s`.
//!
//! [`dcea_alternating`] alternates a projected-gradient dictionary update
//! with proximal-gradient sparse coding. [`dcea_forward`] unfolds `Q`
//! proximal steps into a network whose kernels and thresholds are trained
//! by [`dcea_train`]. Both call the same [`prox_step`].
//!
//! Exponents are clamped to `[-50, 50]` before `exp`. The threshold relates
//! to the `ℓ₁` weight by `b = ηλ`.

use mbdl_autodiff::{
    bindings, fit, toeplitz_matrix, Activation, FitConfig, Graph, Mlp, Optimizer, OptimizerConfig, Tensor,
};
use mbdl_sim::seeded;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::InverseError;
use crate::soft_threshold;

pub const EXP_CLAMP: f64 = 50.0;

fn clamped_exp(v: &DVector<f64>) -> DVector<f64> {
    v.map(|t| Activation::ClampedExp(EXP_CLAMP).apply(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DceaVariant {
    /// Encoder and decoder share the dictionary.
    C,
    /// Encoder kernels `W₁`, `W₂` are separate from the decoder.
    UC,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DceaParams {
    pub variant: DceaVariant,
    pub signal_len: usize,
    /// Decoder kernel bank `[C, L]`; also the encoder for variant C.
    pub kernels: Tensor,
    /// `(W₁, W₂)` kernel banks for variant UC.
    pub encoder: Option<(Tensor, Tensor)>,
    /// Per-channel thresholds `b ≥ 0`.
    pub thresholds: Vec<f64>,
    pub eta: f64,
    pub layers: usize,
    /// Apply ELU to the residual `x − exp(W₁ ŝ)`.
    pub elu: bool,
}

impl DceaParams {
    /// Variant C from a kernel bank.
    pub fn shared(kernels: Tensor, signal_len: usize, thresholds: Vec<f64>, eta: f64, layers: usize) -> Result<Self, InverseError> {
        let p = Self {
            variant: DceaVariant::C,
            signal_len,
            kernels,
            encoder: None,
            thresholds,
            eta,
            layers,
            elu: false,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), InverseError> {
        let shape = self.kernels.shape();
        if shape.len() != 2 || shape[0] == 0 || shape[1] == 0 || shape[1] > self.signal_len {
            return Err(InverseError::Shape(format!("kernel bank {shape:?} for signal length {}", self.signal_len)));
        }
        if self.thresholds.len() != shape[0] {
            return Err(InverseError::Shape("one threshold per channel".into()));
        }
        if self.thresholds.iter().any(|b| !(*b >= 0.0)) {
            return Err(InverseError::InvalidParameter("thresholds must be non-negative".into()));
        }
        if !(self.eta > 0.0) {
            return Err(InverseError::InvalidParameter("η must be positive".into()));
        }
        match (&self.variant, &self.encoder) {
            (DceaVariant::C, None) => Ok(()),
            (DceaVariant::UC, Some((w1, w2))) if w1.shape() == shape && w2.shape() == shape => Ok(()),
            _ => Err(InverseError::Shape("encoder kernels do not match the variant".into())),
        }
    }

    pub fn channels(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn kernel_len(&self) -> usize {
        self.kernels.shape()[1]
    }

    /// `C · (N − L + 1)`.
    pub fn code_len(&self) -> usize {
        self.channels() * (self.signal_len - self.kernel_len() + 1)
    }

    /// Trainable parameters: `C·L + C` for C, `3·C·L + C` for UC.
    pub fn param_count(&self) -> usize {
        let banks = if self.encoder.is_some() { 3 } else { 1 };
        banks * self.kernels.len() + self.thresholds.len()
    }

    pub fn dictionary(&self) -> DMatrix<f64> {
        toeplitz_matrix(&self.kernels, self.signal_len).to_dmatrix()
    }

    fn encoder_mats(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        match &self.encoder {
            Some((w1, w2)) => (
                toeplitz_matrix(w1, self.signal_len).to_dmatrix(),
                toeplitz_matrix(w2, self.signal_len).to_dmatrix(),
            ),
            None => {
                let h = self.dictionary();
                (h.clone(), h)
            }
        }
    }
}

/// Per-channel thresholds repeated over the `M` shifts of each channel.
pub fn expand_thresholds(b: &[f64], shifts: usize) -> DVector<f64> {
    DVector::from_iterator(b.len() * shifts, b.iter().flat_map(|&v| std::iter::repeat_n(v, shifts)))
}

/// One proximal step `T_b(ŝ + η W₂ᵀ r)` with `r = x − exp(W₁ ŝ)`, or
/// `ELU(r)` when `elu` is set.
pub fn prox_step(
    w1: &DMatrix<f64>,
    w2: &DMatrix<f64>,
    s: &DVector<f64>,
    x: &DVector<f64>,
    eta: f64,
    thresholds: &DVector<f64>,
    elu: bool,
) -> DVector<f64> {
    let mut r = x - clamped_exp(&(w1 * s));
    if elu {
        r.apply(|v| *v = Activation::Elu.apply(*v));
    }
    let z = s + w2.tr_mul(&r) * eta;
    z.zip_map(thresholds, soft_threshold)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DceaOutput {
    pub code: DVector<f64>,
    pub mean: DVector<f64>,
    /// `ŝ₁ … ŝ_Q`.
    pub iterates: Vec<DVector<f64>>,
}

/// Unfolded encoder from `ŝ₀ = 0`, then `μ̂ = exp(H ŝ_Q)`.
pub fn dcea_forward(params: &DceaParams, x: &DVector<f64>) -> Result<DceaOutput, InverseError> {
    dcea_forward_from(params, x, &DVector::zeros(params.code_len()))
}

/// Unfolded encoder from a given starting code.
pub fn dcea_forward_from(params: &DceaParams, x: &DVector<f64>, s0: &DVector<f64>) -> Result<DceaOutput, InverseError> {
    params.validate()?;
    if x.len() != params.signal_len || s0.len() != params.code_len() {
        return Err(InverseError::Shape(format!(
            "x has {} entries and ŝ₀ {}, expected {} and {}",
            x.len(),
            s0.len(),
            params.signal_len,
            params.code_len()
        )));
    }
    let (w1, w2) = params.encoder_mats();
    let b = expand_thresholds(&params.thresholds, params.code_len() / params.channels());
    let mut s = s0.clone();
    let mut iterates = Vec::with_capacity(params.layers);
    for _ in 0..params.layers {
        s = prox_step(&w1, &w2, &s, x, params.eta, &b, params.elu);
        iterates.push(s.clone());
    }
    let mean = clamped_exp(&(params.dictionary() * &s));
    Ok(DceaOutput { code: s, mean, iterates })
}

/// `1ᵀexp(Hs) − xᵀHs + λ‖s‖₁`.
pub fn objective(h: &DMatrix<f64>, s: &DVector<f64>, x: &DVector<f64>, lambda: f64) -> f64 {
    let hs = h * s;
    clamped_exp(&hs).sum() - x.dot(&hs) + lambda * s.lp_norm(1)
}

/// Poisson log-likelihood `Σ x ln μ − μ − ln x!`.
pub fn poisson_log_likelihood(x: &DVector<f64>, mean: &DVector<f64>) -> f64 {
    x.iter().zip(mean.iter()).map(|(&k, &m)| mbdl_sim::poisson_log_pmf(k, m)).sum()
}

/// Projected gradient steps on `1ᵀexp(Hs) − xᵀHs` over the kernels with `s`
/// fixed. Each step takes the full-matrix gradient `(exp(Hs) − x) sᵀ`,
/// projects it onto the Toeplitz set by averaging along each kernel's
/// diagonals, and halves the step until the objective does not rise.
pub fn dictionary_update(kernels: &Tensor, s: &DVector<f64>, x: &DVector<f64>, step: f64, steps: usize) -> Tensor {
    let n = x.len();
    let (c, l) = (kernels.shape()[0], kernels.shape()[1]);
    let m = n - l + 1;
    let nll = |k: &Tensor| objective(&toeplitz_matrix(k, n).to_dmatrix(), s, x, 0.0);
    let mut k = kernels.clone();
    let mut current = nll(&k);
    for _ in 0..steps {
        let h = toeplitz_matrix(&k, n).to_dmatrix();
        let resid = clamped_exp(&(&h * s)) - x;
        let mut grad = vec![0.0; c * l];
        for ch in 0..c {
            for j in 0..l {
                let mut acc = 0.0;
                for t in 0..m {
                    acc += resid[t + j] * s[ch * m + t];
                }
                grad[ch * l + j] = acc / m as f64;
            }
        }
        if grad.iter().all(|g| *g == 0.0) {
            break;
        }
        let mut eta = step;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = Tensor::matrix(c, l, k.data().iter().zip(&grad).map(|(a, g)| a - eta * g).collect());
            let v = nll(&trial);
            if v <= current {
                k = trial;
                current = v;
                accepted = true;
                break;
            }
            eta /= 2.0;
        }
        if !accepted {
            break;
        }
    }
    k
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlternatingConfig {
    pub channels: usize,
    pub kernel_len: usize,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub eta: f64,
    pub lambda: f64,
    pub dict_step: f64,
    pub dict_steps: usize,
    pub elu: bool,
    /// Starting kernels; Gaussian with std `1/√L` when unset.
    pub init_kernels: Option<Tensor>,
    pub seed: u64,
}

impl Default for AlternatingConfig {
    fn default() -> Self {
        Self {
            channels: 1,
            kernel_len: 5,
            outer_iters: 40,
            inner_iters: 50,
            eta: 0.05,
            lambda: 0.05,
            dict_step: 0.5,
            dict_steps: 5,
            elu: false,
            init_kernels: None,
            seed: 0,
        }
    }
}

/// The inner proximal loop of one alternation.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerTrace {
    pub start: DVector<f64>,
    pub eta: f64,
    /// `b = ηλ`.
    pub threshold: f64,
    pub iterates: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlternatingResult {
    pub kernels: Tensor,
    pub code: DVector<f64>,
    pub mean: DVector<f64>,
    /// Objective after every alternation.
    pub objective_history: Vec<f64>,
    pub last_inner: InnerTrace,
}

impl AlternatingResult {
    /// Variant-C parameters reproducing the last inner loop.
    pub fn params(&self) -> DceaParams {
        DceaParams {
            variant: DceaVariant::C,
            signal_len: self.mean.len(),
            kernels: self.kernels.clone(),
            encoder: None,
            thresholds: vec![self.last_inner.threshold; self.kernels.shape()[0]],
            eta: self.last_inner.eta,
            layers: self.last_inner.iterates.len(),
            elu: false,
        }
    }
}

/// Alternating dictionary learning and sparse coding on one observation.
///
/// The inner loop restarts from the alternation's starting code with `η`
/// halved whenever a proximal step raises the objective. It fails once `η`
/// falls below `1e-12`.
pub fn dcea_alternating(x: &DVector<f64>, config: &AlternatingConfig) -> Result<AlternatingResult, InverseError> {
    let n = x.len();
    let (c, l) = (config.channels, config.kernel_len);
    if c == 0 || l == 0 || l > n {
        return Err(InverseError::InvalidParameter(format!("C = {c}, L = {l} for N = {n}")));
    }
    if x.iter().any(|v| !(*v >= 0.0) || v.fract() != 0.0) {
        return Err(InverseError::InvalidParameter("observations must be non-negative integers".into()));
    }
    if !(config.eta > 0.0 && config.lambda >= 0.0) {
        return Err(InverseError::InvalidParameter("need η > 0 and λ ≥ 0".into()));
    }
    let mut kernels = match &config.init_kernels {
        Some(k) if k.shape() == [c, l] => k.clone(),
        Some(k) => return Err(InverseError::Shape(format!("initial kernels {:?}", k.shape()))),
        None => random_bank(c, l, 1.0 / (l as f64).sqrt(), &mut seeded(config.seed)),
    };
    let m = n - l + 1;
    let mut s = DVector::zeros(c * m);
    let mut eta = config.eta;
    let mut history = Vec::with_capacity(config.outer_iters);
    let mut last_inner = InnerTrace {
        start: s.clone(),
        eta,
        threshold: eta * config.lambda,
        iterates: Vec::new(),
    };
    for _ in 0..config.outer_iters {
        kernels = dictionary_update(&kernels, &s, x, config.dict_step, config.dict_steps);
        let h = toeplitz_matrix(&kernels, n).to_dmatrix();
        let trace = loop {
            if eta < 1e-12 {
                return Err(InverseError::Overflow {
                    halvings: (config.eta / eta).log2().round() as usize,
                });
            }
            match inner_loop(&h, &s, x, eta, config.lambda, config.inner_iters, config.elu) {
                Some(t) => break t,
                None => eta /= 2.0,
            }
        };
        s = trace.iterates.last().cloned().unwrap_or_else(|| s.clone());
        history.push(objective(&h, &s, x, config.lambda));
        last_inner = trace;
    }
    let mean = clamped_exp(&(toeplitz_matrix(&kernels, n).to_dmatrix() * &s));
    Ok(AlternatingResult {
        kernels,
        code: s,
        mean,
        objective_history: history,
        last_inner,
    })
}

/// `None` when a step raises the objective.
fn inner_loop(
    h: &DMatrix<f64>,
    start: &DVector<f64>,
    x: &DVector<f64>,
    eta: f64,
    lambda: f64,
    iters: usize,
    elu: bool,
) -> Option<InnerTrace> {
    let threshold = eta * lambda;
    let b = DVector::from_element(start.len(), threshold);
    let mut s = start.clone();
    let mut obj = objective(h, &s, x, lambda);
    let mut iterates = Vec::with_capacity(iters);
    for _ in 0..iters {
        s = prox_step(h, h, &s, x, eta, &b, elu);
        let next = objective(h, &s, x, lambda);
        if !next.is_finite() || next > obj + 1e-12 * (1.0 + obj.abs()) {
            return None;
        }
        obj = next;
        iterates.push(s.clone());
    }
    Some(InnerTrace {
        start: start.clone(),
        eta,
        threshold,
        iterates,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DceaTrainConfig {
    pub variant: DceaVariant,
    pub channels: usize,
    pub kernel_len: usize,
    pub layers: usize,
    pub eta: f64,
    pub init_threshold: f64,
    pub elu: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl Default for DceaTrainConfig {
    fn default() -> Self {
        Self {
            variant: DceaVariant::C,
            channels: 4,
            kernel_len: 7,
            layers: 10,
            eta: 0.1,
            init_threshold: 0.01,
            elu: false,
            epochs: 100,
            batch_size: 32,
            optimizer: OptimizerConfig::adam(1e-2),
            seed: 0,
        }
    }
}

fn inverse_softplus(b: f64) -> f64 {
    // ln(e^b − 1), stable for small and large b.
    if b > 30.0 {
        b
    } else {
        b.exp_m1().max(f64::MIN_POSITIVE).ln()
    }
}

fn random_bank<R: Rng + ?Sized>(c: usize, l: usize, scale: f64, rng: &mut R) -> Tensor {
    Tensor::matrix(
        c,
        l,
        (0..c * l).map(|_| { let e: f64 = StandardNormal.sample(rng); scale * e }).collect(),
    )
}

/// Supervised training on `(μ_t, x_t)` pairs against `mean ‖μ̂_t − μ_t‖²`.
/// Kernels are the trainable tensors, so every dictionary stays
/// block-Toeplitz; thresholds are `softplus` of a free parameter.
/// Returns the parameters and per-epoch mean loss.
pub fn dcea_train(
    clean: &[DVector<f64>],
    noisy: &[DVector<f64>],
    config: &DceaTrainConfig,
) -> Result<(DceaParams, Vec<f64>), InverseError> {
    let n = clean.first().ok_or_else(|| InverseError::InvalidParameter("empty training set".into()))?.len();
    if clean.len() != noisy.len() || clean.iter().chain(noisy).any(|v| v.len() != n) {
        return Err(InverseError::Shape("clean and noisy sets must pair up with equal lengths".into()));
    }
    let (c, l) = (config.channels, config.kernel_len);
    if c == 0 || l == 0 || l > n || config.layers == 0 {
        return Err(InverseError::InvalidParameter(format!("C = {c}, L = {l}, Q = {} for N = {n}", config.layers)));
    }
    let m = n - l + 1;
    let mut rng = seeded(config.seed);
    let scale = 0.5 / (l as f64).sqrt();
    let mut g = Graph::new();
    let x = g.input("x");
    let target = g.input("mu");
    let s0 = g.input("s0");
    let kh = g.param("dcea.h", random_bank(c, l, scale, &mut rng));
    let h = g.toeplitz(kh, n);
    let (w1, w2) = match config.variant {
        DceaVariant::C => (h, h),
        DceaVariant::UC => {
            let a = g.param("dcea.w1", random_bank(c, l, scale, &mut rng));
            let b = g.param("dcea.w2", random_bank(c, l, scale, &mut rng));
            (g.toeplitz(a, n), g.toeplitz(b, n))
        }
    };
    let w1t = g.transpose(w1);
    let raw = g.param("dcea.b", Tensor::vector(vec![inverse_softplus(config.init_threshold); c]));
    let b = g.act(raw, Activation::Softplus);
    let mut expand = Tensor::zeros(&[c, c * m]);
    for ch in 0..c {
        for t in 0..m {
            expand.data_mut()[ch * c * m + ch * m + t] = 1.0;
        }
    }
    let expand = g.constant(expand);
    let b_full = g.matmul(b, expand);
    let mut s = s0;
    for _ in 0..config.layers {
        let hs = g.matmul(s, w1t);
        let e = g.act(hs, Activation::ClampedExp(EXP_CLAMP));
        let mut r = g.sub(x, e);
        if config.elu {
            r = g.act(r, Activation::Elu);
        }
        let grad = g.matmul(r, w2);
        let step = g.scale(grad, config.eta);
        let z = g.add(s, step);
        s = g.shrink_by(z, b_full);
    }
    let ht = g.transpose(h);
    let logits = g.matmul(s, ht);
    let mean = g.act(logits, Activation::ClampedExp(EXP_CLAMP));
    let loss = g.mse(mean, target);
    g.set_output(loss);

    let rows = |v: &[DVector<f64>]| Tensor::matrix(v.len(), n, v.iter().flat_map(|r| r.iter().copied()).collect());
    let data = bindings([
        ("x", rows(noisy)),
        ("mu", rows(clean)),
        ("s0", Tensor::zeros(&[clean.len(), c * m])),
    ]);
    let mut opt = Optimizer::new(config.optimizer);
    let fit_cfg = FitConfig {
        epochs: config.epochs,
        batch_size: config.batch_size,
    };
    let losses = fit(&mut g, &data, fit_cfg, &mut opt, &mut rng)?;
    let p = g.params();
    let thresholds = p["dcea.b"].data().iter().map(|&v| Activation::Softplus.apply(v)).collect();
    let encoder = match config.variant {
        DceaVariant::C => None,
        DceaVariant::UC => Some((p["dcea.w1"].clone(), p["dcea.w2"].clone())),
    };
    let params = DceaParams {
        variant: config.variant,
        signal_len: n,
        kernels: p["dcea.h"].clone(),
        encoder,
        thresholds,
        eta: config.eta,
        layers: config.layers,
        elu: config.elu,
    };
    params.validate()?;
    Ok((params, losses))
}

/// Dense denoiser `N → 4N → 4N → 4N → 4N → N` used as the parameter-count
/// reference.
pub fn dense_baseline(n: usize) -> Mlp {
    Mlp::new("baseline", &[n, 4 * n, 4 * n, 4 * n, 4 * n, n], Activation::Relu, Activation::Identity)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bank() -> Tensor {
        Tensor::matrix(2, 3, vec![0.5, 1.0, 0.5, -0.2, 0.4, 0.1])
    }

    #[test]
    fn zero_code_leaves_dictionary_unchanged() {
        let x = DVector::from_vec(vec![3.0, 0.0, 1.0, 2.0, 5.0]);
        let s = DVector::zeros(6);
        let k = bank();
        assert_eq!(dictionary_update(&k, &s, &x, 0.1, 10), k);
        let h = toeplitz_matrix(&k, 5).to_dmatrix();
        assert_eq!(objective(&h, &s, &x, 0.3), 5.0);
    }

    #[test]
    fn huge_threshold_kills_code() {
        let p = DceaParams::shared(bank(), 5, vec![1e6, 1e6], 0.1, 7).unwrap();
        let out = dcea_forward(&p, &DVector::from_vec(vec![9.0, 4.0, 0.0, 1.0, 2.0])).unwrap();
        assert!(out.code.iter().all(|v| *v == 0.0));
        assert!(out.mean.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn zero_layers_returns_initial_code() {
        let p = DceaParams::shared(bank(), 5, vec![0.0, 0.0], 0.1, 0).unwrap();
        let out = dcea_forward(&p, &DVector::from_vec(vec![9.0, 4.0, 0.0, 1.0, 2.0])).unwrap();
        assert!(out.iterates.is_empty());
        assert!(out.code.iter().all(|v| *v == 0.0));
        assert!(out.mean.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn parameter_counts() {
        let p = DceaParams::shared(bank(), 8, vec![0.1, 0.1], 0.1, 3).unwrap();
        assert_eq!(p.param_count(), 2 * 3 + 2);
        let uc = DceaParams {
            variant: DceaVariant::UC,
            encoder: Some((bank(), bank())),
            ..p
        };
        assert_eq!(uc.param_count(), 3 * 6 + 2);
        assert_eq!(dense_baseline(10).param_count(), 56 * 100 + 17 * 10);
    }

    #[test]
    fn rejects_negative_threshold_and_bad_variant() {
        assert!(DceaParams::shared(bank(), 5, vec![-0.1, 0.0], 0.1, 1).is_err());
        let p = DceaParams {
            variant: DceaVariant::UC,
            ..DceaParams::shared(bank(), 5, vec![0.0, 0.0], 0.1, 1).unwrap()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn thresholds_expand_per_channel() {
        assert_eq!(expand_thresholds(&[1.0, 2.0], 2).as_slice(), &[1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn softplus_inverse_round_trips() {
        for b in [1e-4, 0.01, 1.0, 40.0] {
            assert!((Activation::Softplus.apply(inverse_softplus(b)) - b).abs() < 1e-10 * (1.0 + b));
        }
    }
}
