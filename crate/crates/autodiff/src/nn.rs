//! Dense multilayer perceptrons on top of [`Graph`], plus a minimal
//! minibatch training step.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::activation::Activation;
use crate::error::GraphError;
use crate::graph::{Bindings, Graph, NodeId};
use crate::optim::Optimizer;
use crate::tensor::Tensor;

/// A dense network `sizes[0] → sizes[1] → … → sizes[last]`. Weights are stored
/// `[in, out]` so a `[batch, in]` input maps row-wise as `X·W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub prefix: String,
    pub sizes: Vec<usize>,
    pub hidden: Activation,
    pub output: Activation,
}

impl Mlp {
    pub fn new(prefix: &str, sizes: &[usize], hidden: Activation, output: Activation) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        assert!(sizes.iter().all(|&s| s > 0), "layer sizes must be positive");
        Self {
            prefix: prefix.to_string(),
            sizes: sizes.to_vec(),
            hidden,
            output,
        }
    }

    pub fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn weight_name(&self, layer: usize) -> String {
        format!("{}.w{layer}", self.prefix)
    }

    pub fn bias_name(&self, layer: usize) -> String {
        format!("{}.b{layer}", self.prefix)
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Glorot-uniform weights and zero biases.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> BTreeMap<String, Tensor> {
        let mut out = BTreeMap::new();
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
            let data = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
            out.insert(self.weight_name(l), Tensor::matrix(fan_in, fan_out, data));
            out.insert(self.bias_name(l), Tensor::zeros(&[fan_out]));
        }
        out
    }

    /// All-zero parameters.
    pub fn zero_params(&self) -> BTreeMap<String, Tensor> {
        let mut out = BTreeMap::new();
        for (l, w) in self.sizes.windows(2).enumerate() {
            out.insert(self.weight_name(l), Tensor::zeros(&[w[0], w[1]]));
            out.insert(self.bias_name(l), Tensor::zeros(&[w[1]]));
        }
        out
    }

    /// Adds the network to `g` applied to `x`. Parameters already registered
    /// under the same names are reused, so calling this twice shares weights.
    pub fn build(&self, g: &mut Graph, x: NodeId, params: &BTreeMap<String, Tensor>) -> NodeId {
        let mut h = x;
        for l in 0..self.layers() {
            let wn = self.weight_name(l);
            let bn = self.bias_name(l);
            let w = g.param(&wn, params[&wn].clone());
            let b = g.param(&bn, params[&bn].clone());
            let z = g.dense(h, w, b);
            let act = if l + 1 == self.layers() {
                self.output
            } else {
                self.hidden
            };
            h = if act == Activation::Identity {
                z
            } else {
                g.act(z, act)
            };
        }
        h
    }

    /// Softmax-headed variant of [`Mlp::build`]; the output activation is
    /// ignored and replaced by a row-wise softmax.
    pub fn build_softmax(&self, g: &mut Graph, x: NodeId, params: &BTreeMap<String, Tensor>) -> NodeId {
        let plain = Mlp {
            output: Activation::Identity,
            ..self.clone()
        };
        let logits = plain.build(g, x, params);
        g.softmax(logits)
    }

    /// Eager forward pass on a `[batch, in]` matrix or a single `[in]` vector.
    pub fn forward(&self, params: &BTreeMap<String, Tensor>, x: &Tensor) -> Tensor {
        let mut h = x.clone();
        for l in 0..self.layers() {
            let w = &params[&self.weight_name(l)];
            let b = &params[&self.bias_name(l)];
            h = h.matmul(w);
            let cols = h.cols();
            for row in h.data_mut().chunks_mut(cols) {
                for (v, bi) in row.iter_mut().zip(b.data()) {
                    *v += bi;
                }
            }
            let act = if l + 1 == self.layers() {
                self.output
            } else {
                self.hidden
            };
            if act != Activation::Identity {
                h = h.map(|v| act.apply(v));
            }
        }
        h
    }
}

/// Evaluates the graph output (a scalar loss), back-propagates, and applies
/// one optimizer step to the graph's parameters. Returns the loss before the
/// update.
pub fn train_step(g: &mut Graph, bindings: &Bindings, opt: &mut Optimizer) -> Result<f64, GraphError> {
    let loss = g.eval(bindings)?.item();
    let grads = g.backward()?;
    opt.step(g.params_mut(), &grads)?;
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch_size: usize,
}

/// Shuffled minibatch training. Every tensor in `data` is row-aligned with the
/// others; each step binds the same row subset of all of them. Returns the
/// mean loss of each epoch.
///
/// A non-finite loss or gradient restores the parameters from the end of the
/// last finite epoch and returns [`GraphError::Diverged`] carrying them.
pub fn fit<R: Rng + ?Sized>(
    g: &mut Graph,
    data: &Bindings,
    config: FitConfig,
    opt: &mut Optimizer,
    rng: &mut R,
) -> Result<Vec<f64>, GraphError> {
    let n = data.values().next().map(|t| t.shape()[0]).unwrap_or(0);
    if n == 0 || config.batch_size == 0 {
        return Err(GraphError::InvalidShape {
            shape: vec![n, config.batch_size],
            reason: "fit needs data and a positive batch size".to_string(),
        });
    }
    if let Some((name, t)) = data.iter().find(|(_, t)| t.shape()[0] != n) {
        return Err(GraphError::ShapeMismatch {
            node: name.clone(),
            detail: format!("{} rows, expected {n}", t.shape()[0]),
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    let mut checkpoint = g.params().clone();
    for epoch in 0..config.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let b: Bindings = data.iter().map(|(k, t)| (k.clone(), gather_rows(t, chunk))).collect();
            let step = train_step(g, &b, opt);
            let loss = match step {
                Ok(l) if l.is_finite() => l,
                Ok(_) | Err(GraphError::NonFinite(_)) | Err(GraphError::NonFiniteGradient(_)) => {
                    *g.params_mut() = checkpoint.clone();
                    return Err(GraphError::Diverged {
                        epoch,
                        checkpoint: Box::new(checkpoint),
                    });
                }
                Err(e) => return Err(e),
            };
            total += loss;
            batches += 1;
        }
        losses.push(total / batches as f64);
        checkpoint = g.params().clone();
    }
    Ok(losses)
}

/// Copies the rows listed in `idx` out of a `[n, d]` matrix (or `[n]` vector,
/// yielding `[idx.len()]`).
pub fn gather_rows(t: &Tensor, idx: &[usize]) -> Tensor {
    let cols = if t.rank() == 1 { 1 } else { t.cols() };
    let mut data = Vec::with_capacity(idx.len() * cols);
    for &i in idx {
        data.extend_from_slice(&t.data()[i * cols..(i + 1) * cols]);
    }
    if t.rank() == 1 {
        Tensor::vector(data)
    } else {
        let mut shape = t.shape().to_vec();
        shape[0] = idx.len();
        Tensor::new(shape, data).expect("gathered shape")
    }
}
