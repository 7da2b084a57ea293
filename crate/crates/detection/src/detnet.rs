//! DetNet: projected gradient descent unfolded into `Q` trainable layers.
//!
//! Layer `q` computes
//! `z = ReLU(W₁((I + δ₂HᵀH)ŝ - δ₁Hᵀx) + b₁)` and `ŝ = softsign(W₂z + b₂)`.
//! Batches are row-major, so weights are stored `[in, out]` and applied on
//! the right.

use mbdl_autodiff::loss::{log_layer_weights, weighted_l2_node};
use mbdl_autodiff::{bindings, fit, Activation, FitConfig, Graph, NodeId, Optimizer, OptimizerConfig, Params, Tensor};
use mbdl_sim::{seeded, Constellation, LabeledSet};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::DetectionError;
use crate::{stack_rows, Detection, Detector};

fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-limit..=limit)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetNetTrainConfig {
    pub layers: usize,
    /// Defaults to `4K` when unset.
    pub hidden: Option<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    /// Initial value of both learned step sizes, `δ₁ = δ₂ = -step`, so the
    /// untrained gradient stage matches a plain descent step.
    pub init_step: f64,
    pub seed: u64,
}

impl Default for DetNetTrainConfig {
    fn default() -> Self {
        Self {
            layers: 10,
            hidden: None,
            epochs: 60,
            batch_size: 100,
            optimizer: OptimizerConfig::adam(3e-3),
            init_step: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DetNet {
    h: DMatrix<f64>,
    constellation: Constellation,
    layers: usize,
    hidden: usize,
    pub params: Params,
    /// Starting estimate `ŝ₀`, zero by default.
    pub initial: DVector<f64>,
}

fn name(q: usize, field: &str) -> String {
    format!("detnet.l{q}.{field}")
}

impl DetNet {
    /// Randomly initialized network for channel `h`.
    pub fn new<R: Rng + ?Sized>(
        h: DMatrix<f64>,
        constellation: Constellation,
        layers: usize,
        hidden: usize,
        init_step: f64,
        rng: &mut R,
    ) -> Result<Self, DetectionError> {
        if layers == 0 || hidden == 0 {
            return Err(DetectionError::InvalidConfig("DetNet needs Q ≥ 1 and a positive width".into()));
        }
        let k = h.ncols();
        let mut params = Params::new();
        for q in 0..layers {
            params.insert(name(q, "w1"), glorot(k, hidden, rng));
            params.insert(name(q, "b1"), Tensor::zeros(&[hidden]));
            params.insert(name(q, "d1"), Tensor::scalar(-init_step));
            params.insert(name(q, "d2"), Tensor::scalar(-init_step));
            params.insert(name(q, "w2"), glorot(hidden, k, rng));
            params.insert(name(q, "b2"), Tensor::zeros(&[k]));
        }
        Ok(Self {
            initial: DVector::zeros(k),
            h,
            constellation,
            layers,
            hidden,
            params,
        })
    }

    /// Network with every parameter set to zero.
    pub fn zeros(h: DMatrix<f64>, constellation: Constellation, layers: usize, hidden: usize) -> Self {
        let mut net = Self::new(h, constellation, layers, hidden, 0.0, &mut seeded(0)).expect("valid sizes");
        for t in net.params.values_mut() {
            *t = Tensor::zeros(t.shape());
        }
        net
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn param_count(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    fn gram(&self) -> Tensor {
        Tensor::from(&(self.h.transpose() * &self.h))
    }

    fn initial_batch(&self, rows: usize) -> Tensor {
        let k = self.initial.len();
        let mut data = Vec::with_capacity(rows * k);
        for _ in 0..rows {
            data.extend(self.initial.iter());
        }
        Tensor::matrix(rows, k, data)
    }

    /// Adds the unfolded layers to `g`; returns every layer's estimate.
    /// `x` is `[B, N]` and `s0` is `[B, K]`.
    pub fn build(&self, g: &mut Graph, x: NodeId, s0: NodeId) -> Vec<NodeId> {
        let gram = g.constant(self.gram());
        let hc = g.constant(Tensor::from(&self.h));
        let htx = g.matmul(x, hc);
        let mut s = s0;
        let mut outs = Vec::with_capacity(self.layers);
        for q in 0..self.layers {
            let p = |g: &mut Graph, f: &str| g.param(&name(q, f), self.params[&name(q, f)].clone());
            let (w1, b1, d1, d2, w2, b2) = (
                p(g, "w1"),
                p(g, "b1"),
                p(g, "d1"),
                p(g, "d2"),
                p(g, "w2"),
                p(g, "b2"),
            );
            let sg = g.matmul(s, gram);
            let sg = g.mul(d2, sg);
            let hx = g.mul(d1, htx);
            let u = g.add(s, sg);
            let u = g.sub(u, hx);
            let z = g.dense(u, w1, b1);
            let z = g.relu(z);
            let y = g.dense(z, w2, b2);
            s = g.act(y, Activation::Softsign);
            outs.push(s);
        }
        outs
    }

    /// Per-layer soft estimates for a `[B, N]` batch, each `[B, K]`.
    pub fn forward_batch(&self, x: &Tensor) -> Vec<Tensor> {
        let gram = self.gram();
        let htx = x.matmul(&Tensor::from(&self.h));
        let mut s = self.initial_batch(x.rows());
        let mut outs = Vec::with_capacity(self.layers);
        for q in 0..self.layers {
            let d1 = self.params[&name(q, "d1")].item();
            let d2 = self.params[&name(q, "d2")].item();
            let sg = s.matmul(&gram);
            let u = s.zip_map(&sg, |a, b| a + d2 * b).zip_map(&htx, |a, b| a - d1 * b);
            let z = affine(&u, &self.params[&name(q, "w1")], &self.params[&name(q, "b1")]).map(|v| v.max(0.0));
            let y = affine(&z, &self.params[&name(q, "w2")], &self.params[&name(q, "b2")]);
            s = y.map(|v| Activation::Softsign.apply(v));
            outs.push(s.clone());
        }
        outs
    }

    pub fn forward(&self, x: &DVector<f64>) -> Vec<DVector<f64>> {
        let xb = Tensor::matrix(1, x.len(), x.iter().copied().collect());
        self.forward_batch(&xb)
            .into_iter()
            .map(|t| DVector::from_vec(t.into_data()))
            .collect()
    }

    /// Trains on `set` against the weighted per-layer squared error with
    /// weights `log(q + 1)`. Returns the network and per-epoch mean loss.
    pub fn train(
        h: DMatrix<f64>,
        constellation: Constellation,
        set: &LabeledSet,
        config: &DetNetTrainConfig,
    ) -> Result<(Self, Vec<f64>), DetectionError> {
        if set.is_empty() {
            return Err(DetectionError::InvalidConfig("empty training set".into()));
        }
        let mut rng = seeded(config.seed);
        let hidden = config.hidden.unwrap_or(4 * h.ncols());
        let mut net = Self::new(h, constellation, config.layers, hidden, config.init_step, &mut rng)?;
        let mut g = Graph::new();
        let x = g.input("x");
        let s0 = g.input("s0");
        let target = g.input("s");
        let outs = net.build(&mut g, x, s0);
        let loss = weighted_l2_node(&mut g, &outs, target, &log_layer_weights(net.layers));
        g.set_output(loss);
        let data = bindings([
            ("x", stack_rows(&set.x)),
            ("s0", net.initial_batch(set.len())),
            ("s", stack_rows(&set.s)),
        ]);
        let mut opt = Optimizer::new(config.optimizer);
        let fit_cfg = FitConfig {
            epochs: config.epochs,
            batch_size: config.batch_size,
        };
        let losses = fit(&mut g, &data, fit_cfg, &mut opt, &mut rng)?;
        net.params = g.params().clone();
        Ok((net, losses))
    }

    /// Weighted per-layer loss of the current parameters on `set`.
    pub fn loss(&self, set: &LabeledSet) -> f64 {
        let outs = self.forward_batch(&stack_rows(&set.x));
        let target = stack_rows(&set.s);
        mbdl_autodiff::loss::weighted_l2_per_layer(&log_layer_weights(self.layers), &outs, &target)
            .expect("matching shapes")
    }
}

fn affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let mut y = x.matmul(w);
    let cols = y.cols();
    for row in y.data_mut().chunks_mut(cols) {
        for (v, bi) in row.iter_mut().zip(b.data()) {
            *v += bi;
        }
    }
    y
}

impl Detector for DetNet {
    fn detect(&self, x: &DVector<f64>) -> Detection {
        let last = self.forward(x).pop().expect("at least one layer");
        Detection {
            labels: last.iter().map(|&v| self.constellation.nearest(v)).collect(),
            pmfs: None,
        }
    }

    fn name(&self) -> &str {
        "detnet"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_outputs_zero() {
        let net = DetNet::zeros(DMatrix::identity(3, 3), Constellation::bpsk(), 4, 5);
        for s in net.forward(&DVector::from_vec(vec![1.0, -2.0, 0.5])) {
            assert!(s.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn single_identity_layer_by_hand() {
        let mut net = DetNet::zeros(DMatrix::identity(2, 2), Constellation::bpsk(), 1, 2);
        net.params.insert(name(0, "w1"), Tensor::eye(2));
        net.params.insert(name(0, "w2"), Tensor::eye(2));
        net.initial = DVector::from_vec(vec![2.0, -2.0]);
        let out = net.forward(&DVector::from_vec(vec![0.3, 0.7]));
        assert!((out[0][0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(out[0][1], 0.0);
    }

    #[test]
    fn graph_matches_eager_forward() {
        let h = DMatrix::from_row_slice(3, 2, &[1.0, 0.2, -0.4, 0.9, 0.3, 0.5]);
        let mut net = DetNet::new(h, Constellation::bpsk(), 3, 4, 0.3, &mut seeded(2)).unwrap();
        for (i, t) in net.params.values_mut().enumerate() {
            if t.len() == 1 {
                *t = Tensor::scalar(0.1 * i as f64 - 0.7);
            }
        }
        let x = Tensor::matrix(2, 3, vec![0.5, -1.0, 0.2, 1.3, 0.1, -0.6]);
        let mut g = Graph::new();
        let xi = g.input("x");
        let s0 = g.input("s0");
        let outs = net.build(&mut g, xi, s0);
        let b = bindings([("x", x.clone()), ("s0", net.initial_batch(2))]);
        let eager = net.forward_batch(&x);
        for (node, e) in outs.iter().zip(&eager) {
            let v = g.eval_node(*node, &b).unwrap();
            for (a, c) in v.data().iter().zip(e.data()) {
                assert!((a - c).abs() < 1e-13);
            }
        }
    }
}
