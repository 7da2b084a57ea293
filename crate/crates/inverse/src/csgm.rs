//! Compressed sensing with a generative prior: recover `s = G(z)` from
//! `x = H s + w` by descending `‖H G(z) − x‖² + λ‖z‖²` over the latent `z`.

use mbdl_autodiff::{bindings, fit, Activation, Bindings, FitConfig, Graph, Mlp, Optimizer, OptimizerConfig, Params, Tensor};
use mbdl_sim::{derive_seed, seeded};
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::InverseError;

/// A frozen decoder `G: ℝˡ → ℝᴺ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorPrior {
    decoder: Mlp,
    params: Params,
}

impl GeneratorPrior {
    /// `G(z) = B z`.
    pub fn linear(b: &DMatrix<f64>) -> Self {
        let decoder = Mlp::new("decoder", &[b.ncols(), b.nrows()], Activation::Identity, Activation::Identity);
        let mut params = decoder.zero_params();
        params.insert(decoder.weight_name(0), Tensor::from(&b.transpose()));
        Self { decoder, params }
    }

    pub fn latent_dim(&self) -> usize {
        self.decoder.sizes[0]
    }

    pub fn signal_len(&self) -> usize {
        *self.decoder.sizes.last().expect("non-empty sizes")
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn generate(&self, z: &DVector<f64>) -> DVector<f64> {
        let t = Tensor::matrix(1, z.len(), z.iter().copied().collect());
        DVector::from_vec(self.decoder.forward(&self.params, &t).into_data())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    /// Decoder hidden widths; the encoder mirrors them. Empty gives a linear
    /// autoencoder.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            hidden: Vec::new(),
            activation: Activation::Tanh,
            epochs: 200,
            batch_size: 50,
            optimizer: OptimizerConfig::adam(1e-2),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainReport {
    /// Per-epoch mean loss.
    pub losses: Vec<f64>,
    /// Per-element reconstruction MSE on the training signals.
    pub reconstruction_mse: f64,
}

/// Trains an autoencoder on reconstruction MSE and keeps the decoder.
pub fn pretrain_generator(
    signals: &[DVector<f64>],
    latent: usize,
    config: &GeneratorConfig,
) -> Result<(GeneratorPrior, PretrainReport), InverseError> {
    let n = signals.first().ok_or_else(|| InverseError::InvalidParameter("no signals".into()))?.len();
    if latent == 0 || latent >= n {
        return Err(InverseError::InvalidParameter(format!("latent dimension {latent} must be in 1..{n}")));
    }
    if signals.iter().any(|s| s.len() != n) {
        return Err(InverseError::Shape("signals differ in length".into()));
    }
    let mut enc_sizes = vec![n];
    enc_sizes.extend(config.hidden.iter().rev());
    enc_sizes.push(latent);
    let mut dec_sizes = vec![latent];
    dec_sizes.extend(&config.hidden);
    dec_sizes.push(n);
    let encoder = Mlp::new("encoder", &enc_sizes, config.activation, Activation::Identity);
    let decoder = Mlp::new("decoder", &dec_sizes, config.activation, Activation::Identity);
    let mut rng = seeded(config.seed);
    let enc_params = encoder.init_params(&mut rng);
    let dec_params = decoder.init_params(&mut rng);

    let mut g = Graph::new();
    let x = g.input("x");
    let z = encoder.build(&mut g, x, &enc_params);
    let y = decoder.build(&mut g, z, &dec_params);
    let loss = g.mse(y, x);
    g.set_output(loss);
    let data = Tensor::matrix(signals.len(), n, signals.iter().flat_map(|s| s.iter().copied()).collect());
    let mut opt = Optimizer::new(config.optimizer);
    let fit_cfg = FitConfig {
        epochs: config.epochs,
        batch_size: config.batch_size,
    };
    let losses = fit(&mut g, &bindings([("x", data.clone())]), fit_cfg, &mut opt, &mut rng)?;

    let trained = g.params();
    let recon = decoder.forward(trained, &encoder.forward(trained, &data));
    let reconstruction_mse = recon.zip_map(&data, |a, b| (a - b) * (a - b)).sum() / data.len() as f64;
    let params = trained
        .iter()
        .filter(|(k, _)| k.starts_with("decoder."))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    Ok((
        GeneratorPrior { decoder, params },
        PretrainReport {
            losses,
            reconstruction_mse,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsgmResult {
    pub z: DVector<f64>,
    pub signal: DVector<f64>,
    pub loss: f64,
    /// Loss after every accepted step of the winning restart.
    pub history: Vec<f64>,
}

struct LatentObjective {
    g: Graph,
    data: Bindings,
}

impl LatentObjective {
    fn new(prior: &GeneratorPrior, h: &DMatrix<f64>, x: &DVector<f64>, lambda_z: f64) -> Self {
        let l = prior.latent_dim();
        let mut g = Graph::new();
        let z = g.param("z", Tensor::zeros(&[1, l]));
        let xi = g.input("x");
        let out = prior.decoder.build(&mut g, z, &prior.params);
        let ht = g.constant(Tensor::from(&h.transpose()));
        let y = g.matmul(out, ht);
        let d = g.sub(y, xi);
        let d2 = g.act(d, Activation::Square);
        let fit_term = g.sum(d2);
        let z2 = g.act(z, Activation::Square);
        let reg = g.sum(z2);
        let reg = g.scale(reg, lambda_z);
        let loss = g.add(fit_term, reg);
        g.set_output(loss);
        let data = bindings([("x", Tensor::matrix(1, x.len(), x.iter().copied().collect()))]);
        Self { g, data }
    }

    fn value(&mut self, z: &DVector<f64>) -> Result<f64, InverseError> {
        self.g.set_param("z", Tensor::matrix(1, z.len(), z.iter().copied().collect()))?;
        Ok(self.g.eval(&self.data)?.item())
    }

    fn value_and_grad(&mut self, z: &DVector<f64>) -> Result<(f64, DVector<f64>), InverseError> {
        let v = self.value(z)?;
        let grads = self.g.backward()?;
        Ok((v, DVector::from_column_slice(grads["z"].data())))
    }
}

/// Gradient descent with backtracking (Armijo, halving) from `restarts`
/// Gaussian initializations. Returns the lowest-loss candidate. Accepted
/// steps never raise the loss.
pub fn csgm_recover(
    prior: &GeneratorPrior,
    x: &DVector<f64>,
    h: &DMatrix<f64>,
    lambda_z: f64,
    restarts: usize,
    steps: usize,
    seed: u64,
) -> Result<CsgmResult, InverseError> {
    if h.ncols() != prior.signal_len() || h.nrows() != x.len() {
        return Err(InverseError::Shape(format!(
            "H is {}×{}, x has {} entries, G outputs {}",
            h.nrows(),
            h.ncols(),
            x.len(),
            prior.signal_len()
        )));
    }
    if !(lambda_z >= 0.0) {
        return Err(InverseError::InvalidParameter("λ_z must be non-negative".into()));
    }
    let mut obj = LatentObjective::new(prior, h, x, lambda_z);
    let l = prior.latent_dim();
    let mut best: Option<CsgmResult> = None;
    for r in 0..restarts.max(1) {
        let mut rng = seeded(derive_seed(seed, r as u64));
        let mut z = DVector::from_fn(l, |_, _| StandardNormal.sample(&mut rng));
        let (mut loss, mut grad) = obj.value_and_grad(&z)?;
        let mut history = vec![loss];
        let mut t = 1.0;
        for _ in 0..steps {
            let gn = grad.norm_squared();
            if gn < 1e-30 {
                break;
            }
            let mut accepted = false;
            while t > 1e-30 {
                let trial = &z - &grad * t;
                let v = obj.value(&trial)?;
                if v.is_finite() && v <= loss - 0.5 * t * gn {
                    z = trial;
                    accepted = true;
                    break;
                }
                t /= 2.0;
            }
            if !accepted {
                break;
            }
            (loss, grad) = obj.value_and_grad(&z)?;
            history.push(loss);
            t *= 2.0;
        }
        if best.as_ref().is_none_or(|b| loss < b.loss) {
            best = Some(CsgmResult {
                signal: prior.generate(&z),
                z,
                loss,
                history,
            });
        }
    }
    Ok(best.expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_prior_applies_matrix() {
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 1.0, 1.0]);
        let p = GeneratorPrior::linear(&b);
        let z = DVector::from_vec(vec![0.5, -1.0]);
        assert_eq!(p.generate(&z), &b * &z);
        assert_eq!((p.latent_dim(), p.signal_len()), (2, 3));
    }

    #[test]
    fn latent_dimension_must_be_smaller() {
        let s = vec![DVector::zeros(3); 4];
        assert!(pretrain_generator(&s, 3, &GeneratorConfig::default()).is_err());
    }
}
