//! Central finite-difference gradients, used as an independent check on
//! [`Graph::backward`].

use std::collections::BTreeMap;

use crate::error::GraphError;
use crate::graph::{Bindings, Graph};
use crate::tensor::Tensor;

/// `(f(θ + h e_i) - f(θ - h e_i)) / 2h` for every scalar entry of every
/// parameter. Parameters are restored afterwards.
pub fn finite_difference_grads(
    g: &mut Graph,
    bindings: &Bindings,
    h: f64,
) -> Result<BTreeMap<String, Tensor>, GraphError> {
    let names: Vec<String> = g.params().keys().cloned().collect();
    let mut out = BTreeMap::new();
    for name in names {
        let original = g.params()[&name].clone();
        let mut grad = Tensor::zeros(original.shape());
        for i in 0..original.len() {
            let mut plus = original.clone();
            plus.data_mut()[i] += h;
            g.set_param(&name, plus)?;
            let fp = g.eval(bindings)?.item();
            let mut minus = original.clone();
            minus.data_mut()[i] -= h;
            g.set_param(&name, minus)?;
            let fm = g.eval(bindings)?.item();
            grad.data_mut()[i] = (fp - fm) / (2.0 * h);
        }
        g.set_param(&name, original)?;
        out.insert(name, grad);
    }
    Ok(out)
}

/// Norm-wise relative error `‖a - b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Worst relative error between the analytic and finite-difference gradient
/// over all parameters, both concatenated into one vector per parameter.
pub fn max_gradient_error(g: &mut Graph, bindings: &Bindings, h: f64) -> Result<f64, GraphError> {
    g.eval(bindings)?;
    let analytic = g.backward()?;
    let numeric = finite_difference_grads(g, bindings, h)?;
    let mut worst: f64 = 0.0;
    for (name, a) in &analytic {
        worst = worst.max(relative_error(a.data(), numeric[name].data()));
    }
    Ok(worst)
}

/// Builds a small random graph with at most four trainable layers and at most
/// 64 scalar parameters, ending in a scalar loss. Layers are drawn from dense
/// maps with assorted activations, trainable shrinkage, scalar gains, row
/// shifts and per-row constant matrices; the loss is MSE, cross entropy,
/// a sum of squares or a mean.
pub fn random_graph<R: rand::Rng + ?Sized>(rng: &mut R) -> (Graph, Bindings) {
    use crate::activation::Activation;
    use std::sync::Arc;

    const MAX_PARAMS: usize = 64;
    let batch = rng.random_range(1..=3);
    let d0 = rng.random_range(1..=4);
    let layers = rng.random_range(1..=4);
    let mut g = Graph::new();
    let x = g.input("x");
    let mut h = x;
    let mut width = d0;
    let mut used = 0;
    fn uniform<R: rand::Rng + ?Sized>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect()
    }
    for l in 0..layers {
        let mut out = rng.random_range(1..=4);
        while out > 1 && used + width * out + out > MAX_PARAMS {
            out -= 1;
        }
        if used + width * out + out > MAX_PARAMS {
            break;
        }
        let w = g.param(&format!("w{l}"), Tensor::matrix(width, out, uniform(rng, width * out, 1.0)));
        let b = g.param(&format!("b{l}"), Tensor::vector(uniform(rng, out, 0.5)));
        used += width * out + out;
        let mut z = g.dense(h, w, b);
        let variant = rng.random_range(0..5);
        z = match variant {
            0 => {
                let acts = [
                    Activation::Relu,
                    Activation::Sigmoid,
                    Activation::Softsign,
                    Activation::Tanh,
                    Activation::Softplus,
                    Activation::Elu,
                    Activation::Square,
                    Activation::TanhInterval { a: -1.0, b: 2.0 },
                    Activation::SoftThreshold(0.1),
                    Activation::Identity,
                ];
                let a = acts[rng.random_range(0..acts.len())];
                g.act(z, a)
            }
            1 if used + out <= MAX_PARAMS => {
                let t: Vec<f64> = (0..out).map(|_| rng.random_range(0.05..0.3)).collect();
                let t = g.param(&format!("t{l}"), Tensor::vector(t));
                used += out;
                g.shrink_by(z, t)
            }
            2 if used < MAX_PARAMS => {
                let s = g.param(&format!("s{l}"), Tensor::scalar(rng.random_range(0.5..1.5)));
                used += 1;
                let m = g.mul(s, z);
                g.act(m, Activation::Tanh)
            }
            3 => {
                let shifted = g.shift_rows(z, 1);
                let sum = g.add(z, shifted);
                g.act(sum, Activation::Sigmoid)
            }
            _ => {
                let mats: Vec<Tensor> = (0..batch)
                    .map(|_| Tensor::matrix(out, out, uniform(rng, out * out, 1.0)))
                    .collect();
                let y = g.row_matvec(Arc::new(mats), z);
                g.act(y, Activation::Softsign)
            }
        };
        h = z;
        width = out;
    }
    let mut b = Bindings::new();
    b.insert("x".into(), Tensor::matrix(batch, d0, uniform(rng, batch * d0, 1.0)));
    match rng.random_range(0..4) {
        0 => {
            let y = g.input("y");
            g.mse(h, y);
            b.insert("y".into(), Tensor::matrix(batch, width, uniform(rng, batch * width, 1.0)));
        }
        1 => {
            let p = g.softmax(h);
            let y = g.input("y");
            g.cross_entropy(p, y);
            let classes: Vec<usize> = (0..batch).map(|_| rng.random_range(0..width)).collect();
            b.insert("y".into(), crate::loss::one_hot(&classes, width));
        }
        2 => {
            let sq = g.mul(h, h);
            g.sum(sq);
        }
        _ => {
            g.mean(h);
        }
    }
    (g, b)
}
