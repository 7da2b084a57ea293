//! Neural-augmented smoothing: a shared per-index network adds a learned
//! correction `ε_t` to the message sum at every iteration.

use std::sync::Arc;

use mbdl_autodiff::{bindings, Activation, Bindings, Graph, Mlp, NodeId, Optimizer, OptimizerConfig, Params, Tensor};
use mbdl_sim::{seeded, StateSpaceModel};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use crate::error::SmoothingError;
use crate::messages::{check_shapes, kalman_messages, KalmanMessages};
use crate::smoother::{diverged, initial_guess, InitialGuess, SmootherConfig};

/// Ground truth, observations and the (possibly mismatched) model the
/// smoother assumes for them.
#[derive(Debug, Clone)]
pub struct LabeledTrajectory {
    pub model: StateSpaceModel,
    pub s: Vec<DVector<f64>>,
    pub x: Vec<DVector<f64>>,
}

/// `ε_t = c_out · f([μ_past, μ_future, μ_obs, ŝ_t, x_t] ⊙ c_in)`, weights
/// shared over `t` and the iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationNet {
    mlp: Mlp,
    params: Params,
    input_scale: Vec<f64>,
    output_scale: f64,
}

impl AugmentationNet {
    fn mlp(state_dim: usize, obs_dim: usize, hidden: &[usize]) -> Mlp {
        let mut sizes = vec![4 * state_dim + obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(state_dim);
        Mlp::new("augment", &sizes, Activation::Tanh, Activation::Identity)
    }

    /// All weights zero, so `ε ≡ 0`.
    pub fn zero(state_dim: usize, obs_dim: usize, hidden: &[usize]) -> Self {
        let mlp = Self::mlp(state_dim, obs_dim, hidden);
        Self {
            params: mlp.zero_params(),
            input_scale: vec![1.0; mlp.sizes[0]],
            output_scale: 1.0,
            mlp,
        }
    }

    /// Glorot hidden layers and a zero output layer: starts as the plain
    /// smoother.
    pub fn init(
        state_dim: usize,
        obs_dim: usize,
        hidden: &[usize],
        input_scale: Vec<f64>,
        output_scale: f64,
        rng: &mut impl rand::Rng,
    ) -> Self {
        let mlp = Self::mlp(state_dim, obs_dim, hidden);
        let mut params = mlp.init_params(rng);
        let last = mlp.layers() - 1;
        let w = params[&mlp.weight_name(last)].shape().to_vec();
        params.insert(mlp.weight_name(last), Tensor::zeros(&w));
        Self {
            mlp,
            params,
            input_scale,
            output_scale,
        }
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.mlp.param_count()
    }

    pub fn hidden(&self) -> &[usize] {
        &self.mlp.sizes[1..self.mlp.sizes.len() - 1]
    }

    pub fn input_dim(&self) -> usize {
        self.mlp.sizes[0]
    }

    pub fn state_dim(&self) -> usize {
        *self.mlp.sizes.last().expect("non-empty sizes")
    }

    /// `[rows, in]` features to `[rows, d_s]` corrections.
    pub fn correction(&self, features: &Tensor) -> Tensor {
        let scaled = Tensor::matrix(
            features.rows(),
            features.cols(),
            features
                .data()
                .chunks(features.cols())
                .flat_map(|r| r.iter().zip(&self.input_scale).map(|(a, c)| a * c))
                .collect(),
        );
        self.mlp.forward(&self.params, &scaled).map(|v| v * self.output_scale)
    }

    fn build(&self, g: &mut Graph, features: NodeId) -> NodeId {
        let scale = g.constant(Tensor::from(&DMatrix::from_diagonal(&DVector::from_vec(self.input_scale.clone()))));
        let scaled = g.matmul(features, scale);
        let out = self.mlp.build(g, scaled, &self.params);
        g.scale(out, self.output_scale)
    }
}

fn features(m: &KalmanMessages, s: &[DVector<f64>], x: &[DVector<f64>]) -> Tensor {
    let rows: Vec<Vec<f64>> = (0..s.len())
        .map(|t| {
            m.from_past[t]
                .iter()
                .chain(m.from_future[t].iter())
                .chain(m.from_obs[t].iter())
                .chain(s[t].iter())
                .chain(x[t].iter())
                .copied()
                .collect()
        })
        .collect();
    Tensor::from_rows(&rows)
}

/// `ŝ^{(q+1)}_t = ŝ^{(q)}_t + η (Σ μ_t + ε_t)` for `q < Q` at a fixed `η`.
/// Returns all `Q` trajectories. With a zero network this is
/// [`crate::gradient_smoother`] without step halving, bit for bit.
pub fn neural_augmented_smoother(
    x: &[DVector<f64>],
    model: &StateSpaceModel,
    net: &AugmentationNet,
    config: &SmootherConfig,
) -> Result<Vec<Vec<DVector<f64>>>, SmoothingError> {
    config.validate()?;
    if net.input_dim() != 4 * model.state_dim() + model.obs_dim() || net.state_dim() != model.state_dim() {
        return Err(SmoothingError::Shape("network does not fit the model dimensions".into()));
    }
    let mut s = initial_guess(x, model, config.init);
    let mut out = Vec::with_capacity(config.iters);
    for q in 0..config.iters {
        let m = kalman_messages(&s, x, model)?;
        let eps = net.correction(&features(&m, &s, x));
        let d = model.state_dim();
        s = s
            .iter()
            .enumerate()
            .map(|(t, st)| st + (m.sum(t) + DVector::from_column_slice(&eps.data()[t * d..(t + 1) * d])) * config.eta)
            .collect();
        if diverged(&s) {
            return Err(SmoothingError::Diverged { eta: config.eta, iteration: q });
        }
        out.push(s.clone());
    }
    Ok(out)
}

/// Per-trajectory constants of the unrolled graph.
struct Unrolled {
    past: Vec<Tensor>,
    future: Vec<Tensor>,
    offset: Vec<f64>,
}

fn unrolled_constants(tr: &LabeledTrajectory) -> Unrolled {
    let (t_len, d) = (tr.x.len(), tr.model.state_dim());
    let zero = Tensor::zeros(&[d, d]);
    let past = (0..t_len)
        .map(|t| if t == 0 { zero.clone() } else { Tensor::from(tr.model.f(t)) })
        .collect();
    let future = (0..t_len)
        .map(|t| {
            if t + 1 < t_len {
                Tensor::from(&tr.model.f(t + 1).transpose())
            } else {
                zero.clone()
            }
        })
        .collect();
    let mut offset = vec![0.0; t_len * d];
    offset[..d].copy_from_slice((tr.model.f(0) * tr.model.s0()).as_slice());
    Unrolled { past, future, offset }
}

fn stack(rows: impl Iterator<Item = f64>, n: usize, d: usize) -> Tensor {
    Tensor::matrix(n, d, rows.collect())
}

/// Graph of `Σ_q (q/Q) · (1/n) Σ_t ‖s_t − ŝ_t^{(q)}‖²` over a batch of
/// trajectories stacked row-wise, unrolled through `Q` smoother iterations
/// with the network's parameters registered as graph parameters. Every
/// trajectory in the batch must share `H`, `W` and `R`.
pub fn unrolled_loss_graph(
    batch: &[&LabeledTrajectory],
    net: &AugmentationNet,
    eta: f64,
    iters: usize,
    init: InitialGuess,
) -> Result<(Graph, Bindings), SmoothingError> {
    let first = batch.first().ok_or(SmoothingError::Empty)?;
    let m0 = &first.model;
    for tr in batch {
        check_shapes(&tr.s, &tr.x, &tr.model)?;
        if tr.model.h_obs() != m0.h_obs() || tr.model.w() != m0.w() || tr.model.r() != m0.r() {
            return Err(SmoothingError::Shape("batch trajectories must share H, W and R".into()));
        }
    }
    if iters == 0 {
        return Err(SmoothingError::InvalidConfig("Q must be at least 1".into()));
    }
    let (d, dx) = (m0.state_dim(), m0.obs_dim());
    let rows: usize = batch.iter().map(|t| t.x.len()).sum();
    let consts: Vec<Unrolled> = batch.iter().map(|t| unrolled_constants(t)).collect();
    let past = Arc::new(consts.iter().flat_map(|c| c.past.iter().cloned()).collect::<Vec<_>>());
    let future = Arc::new(consts.iter().flat_map(|c| c.future.iter().cloned()).collect::<Vec<_>>());
    let offset = stack(consts.iter().flat_map(|c| c.offset.iter().copied()), rows, d);

    let w_inv = m0.w_chol().inverse();
    let r_inv = m0.r_chol().inverse();
    let h = m0.h_obs();

    let mut g = Graph::new();
    let x = g.input("x");
    let truth = g.input("s");
    let mut s = g.input("s_init");
    let offset = g.constant(offset);
    let w_inv_n = g.constant(Tensor::from(&w_inv));
    let h_t = g.constant(Tensor::from(&h.transpose()));
    let r_inv_h = g.constant(Tensor::from(&(&r_inv * h)));

    let mut total: Option<NodeId> = None;
    for q in 1..=iters {
        let prev = g.shift_rows(s, 1);
        let pred = g.row_matvec(past.clone(), prev);
        let pred = g.add(pred, offset);
        let e = g.sub(s, pred);
        let a = g.matmul(e, w_inv_n);
        let mu_past = g.scale(a, -1.0);
        let next = g.shift_rows(a, -1);
        let mu_future = g.row_matvec(future.clone(), next);
        let hs = g.matmul(s, h_t);
        let resid = g.sub(x, hs);
        let mu_obs = g.matmul(resid, r_inv_h);
        let feats = g.concat(&[mu_past, mu_future, mu_obs, s, x]);
        let eps = net.build(&mut g, feats);
        let sum = g.add(mu_past, mu_future);
        let sum = g.add(sum, mu_obs);
        let step = g.add(sum, eps);
        let step = g.scale(step, eta);
        s = g.add(s, step);
        let err = g.mse(s, truth);
        let term = g.scale(err, q as f64 / iters as f64);
        total = Some(match total {
            Some(t) => g.add(t, term),
            None => term,
        });
    }
    g.set_output(total.expect("Q ≥ 1"));

    let flat = |f: &dyn Fn(&LabeledTrajectory) -> Vec<DVector<f64>>, width: usize| {
        stack(batch.iter().flat_map(|t| f(t).into_iter().flat_map(|v| v.iter().copied().collect::<Vec<_>>())), rows, width)
    };
    let data = bindings([
        ("x", flat(&|t| t.x.clone(), dx)),
        ("s", flat(&|t| t.s.clone(), d)),
        ("s_init", flat(&|t| initial_guess(&t.x, &t.model, init), d)),
    ]);
    Ok((g, data))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub hidden: Vec<usize>,
    /// Step size, iteration count and initial guess of the unrolled smoother.
    pub smoother: SmootherConfig,
    pub epochs: usize,
    /// Trajectories per step.
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            smoother: SmootherConfig {
                iters: 20,
                ..SmootherConfig::default()
            },
            epochs: 100,
            batch_size: 8,
            optimizer: OptimizerConfig::adam(2e-3),
            seed: 0,
        }
    }
}

/// Feature scales from the first smoother iteration on the training data:
/// `1/std` per input column and the RMS message-sum entry for the output.
fn feature_scales(data: &[LabeledTrajectory], init: InitialGuess) -> Result<(Vec<f64>, f64), SmoothingError> {
    let mut rows = Vec::new();
    let mut sums = Vec::new();
    for tr in data {
        let s = initial_guess(&tr.x, &tr.model, init);
        let m = kalman_messages(&s, &tr.x, &tr.model)?;
        let f = features(&m, &s, &tr.x);
        rows.extend(f.data().chunks(f.cols()).map(|r| r.to_vec()));
        sums.extend((0..s.len()).flat_map(|t| m.sum(t).iter().copied().collect::<Vec<_>>()));
    }
    let n = rows.len() as f64;
    let cols = rows[0].len();
    let input = (0..cols)
        .map(|c| {
            let mean = rows.iter().map(|r| r[c]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                1.0 / var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let rms = (sums.iter().map(|v| v * v).sum::<f64>() / sums.len() as f64).sqrt();
    Ok((input, if rms > 0.0 { rms } else { 1.0 }))
}

/// End-to-end training through the unrolled smoother. Returns the network
/// and the per-epoch mean loss.
pub fn train_augmentation(
    data: &[LabeledTrajectory],
    config: &AugmentConfig,
) -> Result<(AugmentationNet, Vec<f64>), SmoothingError> {
    let first = data.first().ok_or(SmoothingError::Empty)?;
    config.smoother.validate()?;
    if config.batch_size == 0 {
        return Err(SmoothingError::InvalidConfig("batch size must be positive".into()));
    }
    let (d, dx) = (first.model.state_dim(), first.model.obs_dim());
    let mut rng = seeded(config.seed);
    let (input_scale, output_scale) = feature_scales(data, config.smoother.init)?;
    let mut net = AugmentationNet::init(d, dx, &config.hidden, input_scale, output_scale, &mut rng);
    let mut opt = Optimizer::new(config.optimizer);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    let mut checkpoint = net.clone();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut batches) = (0.0, 0);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&LabeledTrajectory> = chunk.iter().map(|&i| &data[i]).collect();
            let (mut g, b) = unrolled_loss_graph(&batch, &net, config.smoother.eta, config.smoother.iters, config.smoother.init)?;
            let step = g.eval(&b).map(|l| l.item()).and_then(|l| Ok((l, g.backward()?)));
            let (loss, grads) = match step {
                Ok((l, gr)) if l.is_finite() => (l, gr),
                _ => {
                    return Err(SmoothingError::TrainingDiverged {
                        epoch,
                        checkpoint: Box::new(checkpoint),
                    })
                }
            };
            if opt.step(&mut net.params, &grads).is_err() {
                return Err(SmoothingError::TrainingDiverged {
                    epoch,
                    checkpoint: Box::new(checkpoint),
                });
            }
            total += loss;
            batches += 1;
        }
        losses.push(total / batches as f64);
        checkpoint = net.clone();
    }
    Ok((net, losses))
}
