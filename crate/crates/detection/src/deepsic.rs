//! DeepSIC: iterative soft interference cancellation where every
//! (user, iteration) soft decoder is a small classifier.
//!
//! Block `(q, k)` maps `x ⊕ {p̂_l^(q-1)}_{l≠k}` to `p̂_k^(q)`. The first
//! iteration sees uniform PMFs. Blocks are trait objects, so a closed-form
//! Gaussian soft decoder can stand in for a trained network.

use std::fmt::Debug;
use std::sync::Arc;

use mbdl_autodiff::loss::one_hot;
use mbdl_autodiff::{
    bindings, fit, softmax_slice, Activation, Bindings, FitConfig, Graph, Mlp, NodeId, Optimizer, OptimizerConfig,
    Params, Tensor,
};
use mbdl_sim::{seeded, Constellation, GaussianMimoChannel, LabeledSet};
use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::DetectionError;
use crate::sic::{moments, normalize_log};
use crate::{argmax, stack_rows, Detection, Detector};

pub trait SoftBlock: Send + Sync + Debug {
    /// PMFs for a `[B, N]` batch of observations given the `[B, (K-1)|S|]`
    /// concatenated PMFs of the interfering users. Returns `[B, |S|]`.
    fn pmf_batch(&self, x: &Tensor, interference: &Tensor) -> Tensor;
}

/// Dense classifier block with a softmax head.
#[derive(Debug, Clone)]
pub struct MlpBlock {
    pub mlp: Mlp,
    pub params: Params,
}

impl SoftBlock for MlpBlock {
    fn pmf_batch(&self, x: &Tensor, interference: &Tensor) -> Tensor {
        let logits = self.mlp.forward(&self.params, &concat_cols(&[x, interference]));
        softmax_rows(logits)
    }
}

/// Always returns the uniform PMF.
#[derive(Debug, Clone, Copy)]
pub struct UniformBlock {
    pub levels: usize,
}

impl SoftBlock for UniformBlock {
    fn pmf_batch(&self, x: &Tensor, _interference: &Tensor) -> Tensor {
        Tensor::full(&[x.rows(), self.levels], 1.0 / self.levels as f64)
    }
}

/// Exact Gaussian soft decoder for user `k` of a known linear channel.
///
/// Written in matched-filter form: with `a = Σ⁻¹h_k`, the log-likelihood of
/// symbol `α` is `α·aᵀz - α²·h_kᵀa/2` up to a constant, and the interference
/// covariance is assembled as `H₋ₖ diag(v) H₋ₖᵀ`.
#[derive(Debug, Clone)]
pub struct AnalyticBlock {
    channel: GaussianMimoChannel,
    user: usize,
}

impl AnalyticBlock {
    pub fn new(channel: GaussianMimoChannel, user: usize) -> Self {
        assert!(user < channel.n_users(), "user index out of range");
        Self { channel, user }
    }

    pub fn pmf(&self, x: &DVector<f64>, interference: &[f64]) -> Vec<f64> {
        let h = self.channel.h();
        let points = self.channel.constellation().points();
        let m = points.len();
        let others: Vec<usize> = (0..self.channel.n_users()).filter(|&l| l != self.user).collect();
        let mut means = DVector::zeros(others.len());
        let mut vars = DVector::zeros(others.len());
        for (j, pmf) in interference.chunks(m).enumerate() {
            let (e, v) = moments(points, pmf);
            means[j] = e;
            vars[j] = v;
        }
        let h_others = DMatrix::from_fn(h.nrows(), others.len(), |i, j| h[(i, others[j])]);
        let z = x - &h_others * means;
        let sigma2 = self.channel.sigma() * self.channel.sigma();
        let cov = &h_others * DMatrix::from_diagonal(&vars) * h_others.transpose()
            + DMatrix::identity(h.nrows(), h.nrows()) * sigma2;
        let chol = Cholesky::new(cov).expect("positive noise keeps the covariance definite");
        let hk = h.column(self.user).into_owned();
        let a = chol.solve(&hk);
        let drive = a.dot(&z);
        let energy = a.dot(&hk);
        let logits: Vec<f64> = points.iter().map(|&s| s * drive - 0.5 * s * s * energy).collect();
        normalize_log(&logits)
    }
}

impl SoftBlock for AnalyticBlock {
    fn pmf_batch(&self, x: &Tensor, interference: &Tensor) -> Tensor {
        let m = self.channel.constellation().len();
        let mut out = Vec::with_capacity(x.rows() * m);
        for r in 0..x.rows() {
            let xr = DVector::from_column_slice(x.row(r));
            out.extend(self.pmf(&xr, interference.row(r)));
        }
        Tensor::matrix(x.rows(), m, out)
    }
}

fn concat_cols(parts: &[&Tensor]) -> Tensor {
    let rows = parts[0].rows();
    let width: usize = parts.iter().map(|p| p.cols()).sum();
    let mut data = Vec::with_capacity(rows * width);
    for r in 0..rows {
        for p in parts {
            data.extend_from_slice(p.row(r));
        }
    }
    Tensor::matrix(rows, width, data)
}

fn softmax_rows(mut t: Tensor) -> Tensor {
    let cols = t.cols();
    for row in t.data_mut().chunks_mut(cols) {
        let p = softmax_slice(row);
        row.copy_from_slice(&p);
    }
    t
}

fn interference_of(pmfs: &[Tensor], k: usize) -> Tensor {
    let parts: Vec<&Tensor> = pmfs.iter().enumerate().filter(|(l, _)| *l != k).map(|(_, p)| p).collect();
    if parts.is_empty() {
        return Tensor::zeros(&[pmfs[k].rows(), 0]);
    }
    concat_cols(&parts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainingMode {
    /// All blocks jointly on the summed cross entropy of the final PMFs.
    EndToEnd,
    /// One block at a time, layer by layer, each on its own cross entropy.
    Sequential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepSicTrainConfig {
    pub mode: TrainingMode,
    pub iterations: usize,
    /// Hidden width of each block; defaults to `16(K-1)|S|`.
    pub hidden: Option<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl Default for DeepSicTrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainingMode::Sequential,
            iterations: 5,
            hidden: None,
            epochs: 40,
            batch_size: 100,
            optimizer: OptimizerConfig::adam(5e-3),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DeepSicReport {
    /// `(iteration, user)` of every separate optimization, in run order.
    pub block_trainings: Vec<(usize, usize)>,
    /// Final-epoch mean loss of each optimization.
    pub final_losses: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DeepSic {
    constellation: Constellation,
    n_rx: usize,
    users: usize,
    /// `blocks[q][k]`.
    blocks: Vec<Vec<Arc<dyn SoftBlock>>>,
    params: Params,
}

pub fn default_hidden(users: usize, levels: usize) -> usize {
    (16 * users.saturating_sub(1) * levels).max(16)
}

fn block_mlp(q: usize, k: usize, n_rx: usize, users: usize, levels: usize, hidden: usize) -> Mlp {
    Mlp::new(
        &format!("deepsic.q{q}.k{k}"),
        &[n_rx + (users - 1) * levels, hidden, levels],
        Activation::Relu,
        Activation::Identity,
    )
}

impl DeepSic {
    pub fn from_blocks(
        constellation: Constellation,
        n_rx: usize,
        blocks: Vec<Vec<Arc<dyn SoftBlock>>>,
    ) -> Result<Self, DetectionError> {
        let users = blocks.first().map(Vec::len).unwrap_or(0);
        if users == 0 || blocks.iter().any(|l| l.len() != users) {
            return Err(DetectionError::InvalidConfig("every iteration needs one block per user".into()));
        }
        Ok(Self {
            constellation,
            n_rx,
            users,
            blocks,
            params: Params::new(),
        })
    }

    /// Closed-form Gaussian soft decoders in every slot.
    pub fn analytic(channel: &GaussianMimoChannel, iterations: usize) -> Result<Self, DetectionError> {
        if channel.sigma() <= 0.0 {
            return Err(DetectionError::InvalidConfig("analytic blocks need positive noise".into()));
        }
        let blocks = (0..iterations)
            .map(|_| {
                (0..channel.n_users())
                    .map(|k| Arc::new(AnalyticBlock::new(channel.clone(), k)) as Arc<dyn SoftBlock>)
                    .collect()
            })
            .collect();
        Self::from_blocks(channel.constellation().clone(), channel.n_rx(), blocks)
    }

    /// Rebuilds a trained network from its flattened parameters.
    pub fn from_params(
        constellation: Constellation,
        n_rx: usize,
        users: usize,
        iterations: usize,
        hidden: usize,
        params: &Params,
    ) -> Result<Self, DetectionError> {
        let levels = constellation.len();
        let mut all = Params::new();
        let mut blocks = Vec::with_capacity(iterations);
        for q in 0..iterations {
            let mut layer: Vec<Arc<dyn SoftBlock>> = Vec::with_capacity(users);
            for k in 0..users {
                let mlp = block_mlp(q, k, n_rx, users, levels, hidden);
                let mut own = Params::new();
                for l in 0..mlp.layers() {
                    for name in [mlp.weight_name(l), mlp.bias_name(l)] {
                        let t = params
                            .get(&name)
                            .ok_or_else(|| DetectionError::InvalidConfig(format!("missing parameter {name}")))?;
                        own.insert(name.clone(), t.clone());
                        all.insert(name, t.clone());
                    }
                }
                layer.push(Arc::new(MlpBlock { mlp, params: own }));
            }
            blocks.push(layer);
        }
        let mut net = Self::from_blocks(constellation, n_rx, blocks)?;
        net.params = all;
        Ok(net)
    }

    pub fn n_rx(&self) -> usize {
        self.n_rx
    }

    pub fn iterations(&self) -> usize {
        self.blocks.len()
    }

    pub fn users(&self) -> usize {
        self.users
    }

    /// Per-iteration PMFs for a `[B, N]` batch: `out[q][k]` is `[B, |S|]`.
    pub fn forward_batch(&self, x: &Tensor) -> Vec<Vec<Tensor>> {
        let m = self.constellation.len();
        let mut pmfs = vec![Tensor::full(&[x.rows(), m], 1.0 / m as f64); self.users];
        let mut out = Vec::with_capacity(self.blocks.len());
        for layer in &self.blocks {
            let next: Vec<Tensor> = layer
                .iter()
                .enumerate()
                .map(|(k, b)| b.pmf_batch(x, &interference_of(&pmfs, k)))
                .collect();
            out.push(next.clone());
            pmfs = next;
        }
        out
    }

    /// Final-iteration PMFs of a single observation, one vector per user.
    pub fn forward(&self, x: &DVector<f64>) -> Vec<Vec<f64>> {
        let xb = Tensor::matrix(1, x.len(), x.iter().copied().collect());
        match self.forward_batch(&xb).pop() {
            Some(last) => last.into_iter().map(Tensor::into_data).collect(),
            None => vec![vec![1.0 / self.constellation.len() as f64; self.constellation.len()]; self.users],
        }
    }

    pub fn train(
        set: &LabeledSet,
        constellation: Constellation,
        config: &DeepSicTrainConfig,
    ) -> Result<(Self, DeepSicReport), DetectionError> {
        if set.is_empty() || config.iterations == 0 {
            return Err(DetectionError::InvalidConfig("need data and at least one iteration".into()));
        }
        let n_rx = set.x[0].len();
        let users = set.labels[0].len();
        let levels = constellation.len();
        let hidden = config.hidden.unwrap_or_else(|| default_hidden(users, levels));
        let x = stack_rows(&set.x);
        let targets: Vec<Tensor> = (0..users)
            .map(|k| {
                let cls: Vec<usize> = set.labels.iter().map(|l| l[k]).collect();
                one_hot(&cls, levels)
            })
            .collect();
        let mut rng = seeded(config.seed);
        let mut report = DeepSicReport::default();
        let fit_cfg = FitConfig {
            epochs: config.epochs,
            batch_size: config.batch_size,
        };
        let mut params = Params::new();
        match config.mode {
            TrainingMode::EndToEnd => {
                let mut g = Graph::new();
                let xi = g.input("x");
                let uniform = g.input("u");
                let mut prev = vec![uniform; users];
                for q in 0..config.iterations {
                    let mut next = Vec::with_capacity(users);
                    for k in 0..users {
                        let mlp = block_mlp(q, k, n_rx, users, levels, hidden);
                        let init = mlp.init_params(&mut rng);
                        let mut parts: Vec<NodeId> = vec![xi];
                        parts.extend(prev.iter().enumerate().filter(|(l, _)| *l != k).map(|(_, &p)| p));
                        let inp = g.concat(&parts);
                        next.push(mlp.build_softmax(&mut g, inp, &init));
                    }
                    prev = next;
                }
                let mut total: Option<NodeId> = None;
                for (k, &p) in prev.iter().enumerate() {
                    let y = g.input(&format!("y{k}"));
                    let ce = g.cross_entropy(p, y);
                    total = Some(match total {
                        Some(t) => g.add(t, ce),
                        None => ce,
                    });
                }
                g.set_output(total.expect("at least one user"));
                let mut data: Bindings = bindings([
                    ("x", x.clone()),
                    ("u", Tensor::full(&[set.len(), levels], 1.0 / levels as f64)),
                ]);
                for (k, t) in targets.iter().enumerate() {
                    data.insert(format!("y{k}"), t.clone());
                }
                let mut opt = Optimizer::new(config.optimizer);
                let losses = fit(&mut g, &data, fit_cfg, &mut opt, &mut rng)?;
                report.final_losses.push(*losses.last().unwrap_or(&f64::NAN));
                params = g.params().clone();
            }
            TrainingMode::Sequential => {
                let mut pmfs = vec![Tensor::full(&[set.len(), levels], 1.0 / levels as f64); users];
                for q in 0..config.iterations {
                    let mut layer = Vec::with_capacity(users);
                    for (k, target) in targets.iter().enumerate() {
                        let mlp = block_mlp(q, k, n_rx, users, levels, hidden);
                        let init = mlp.init_params(&mut rng);
                        let mut g = Graph::new();
                        let zi = g.input("z");
                        let yi = g.input("y");
                        let p = mlp.build_softmax(&mut g, zi, &init);
                        let ce = g.cross_entropy(p, yi);
                        g.set_output(ce);
                        let data = bindings([
                            ("z", concat_cols(&[&x, &interference_of(&pmfs, k)])),
                            ("y", target.clone()),
                        ]);
                        let mut opt = Optimizer::new(config.optimizer);
                        let losses = fit(&mut g, &data, fit_cfg, &mut opt, &mut rng)?;
                        report.block_trainings.push((q, k));
                        report.final_losses.push(*losses.last().unwrap_or(&f64::NAN));
                        params.extend(g.params().clone());
                        layer.push(MlpBlock {
                            mlp,
                            params: g.params().clone(),
                        });
                    }
                    pmfs = layer
                        .iter()
                        .enumerate()
                        .map(|(k, b)| b.pmf_batch(&x, &interference_of(&pmfs, k)))
                        .collect();
                }
            }
        }
        let net = Self::from_params(constellation, n_rx, users, config.iterations, hidden, &params)?;
        Ok((net, report))
    }

    /// Parameters of all trained blocks, empty for closed-form networks.
    pub fn params(&self) -> &Params {
        &self.params
    }
}

impl Detector for DeepSic {
    fn detect(&self, x: &DVector<f64>) -> Detection {
        let pmfs = self.forward(x);
        Detection {
            labels: pmfs.iter().map(|p| argmax(p)).collect(),
            pmfs: Some(pmfs),
        }
    }

    fn name(&self) -> &str {
        "deepsic"
    }
}
