//! Element-wise activations and the softmax map.

use crate::tensor::Tensor;

/// Element-wise activation functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Identity,
    /// `max(x, 0)`.
    Relu,
    /// `1 / (1 + exp(-x))`.
    Sigmoid,
    /// `x / (1 + |x|)`: odd, monotone, range `(-1, 1)`.
    Softsign,
    /// Shrinkage `sign(x) · max(|x| - b, 0)` with a fixed `b >= 0`.
    SoftThreshold(f64),
    Exp,
    /// `exp(clamp(x, -limit, limit))`; gradient is zero outside the clamp.
    ClampedExp(f64),
    /// `ln(1 + exp(x))`.
    Softplus,
    Tanh,
    /// Maps onto the open interval `(a, b)`: `a + (b - a)(1 + tanh x) / 2`.
    TanhInterval { a: f64, b: f64 },
    /// `x` for `x > 0`, `exp(x) - 1` otherwise.
    Elu,
    Square,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Softsign => x / (1.0 + x.abs()),
            Activation::SoftThreshold(b) => soft_threshold(x, b),
            Activation::Exp => x.exp(),
            Activation::ClampedExp(limit) => x.clamp(-limit, limit).exp(),
            Activation::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
            Activation::Tanh => x.tanh(),
            Activation::TanhInterval { a, b } => a + (b - a) * (1.0 + x.tanh()) / 2.0,
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Activation::Square => x * x,
        }
    }

    /// `d apply(x) / dx`, given the input `x` and the cached output `y`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Softsign => {
                let d = 1.0 + x.abs();
                1.0 / (d * d)
            }
            Activation::SoftThreshold(b) => {
                if x.abs() > b {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Exp => y,
            Activation::ClampedExp(limit) => {
                if x.abs() < limit {
                    y
                } else {
                    0.0
                }
            }
            Activation::Softplus => sigmoid(x),
            Activation::Tanh => 1.0 - y * y,
            Activation::TanhInterval { a, b } => {
                let t = x.tanh();
                (b - a) * (1.0 - t * t) / 2.0
            }
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    x.exp()
                }
            }
            Activation::Square => 2.0 * x,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `T_b(x) = sign(x) · max(|x| - b, 0)`.
pub fn soft_threshold(x: f64, b: f64) -> f64 {
    if x > b {
        x - b
    } else if x < -b {
        x + b
    } else {
        0.0
    }
}

/// Applies `kind` element-wise. Shape is preserved.
pub fn apply_activation(kind: Activation, x: &Tensor) -> Tensor {
    x.map(|v| kind.apply(v))
}

/// Max-subtracted softmax of a slice, written into `out`.
pub fn softmax_into(x: &[f64], out: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

pub fn softmax_slice(x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    softmax_into(x, &mut out);
    out
}

/// Softmax over the last axis: a vector maps to a probability vector, a matrix
/// maps row by row.
pub fn softmax(x: &Tensor) -> Tensor {
    let cols = x.cols();
    let mut out = x.clone();
    for (src, dst) in x.data().chunks(cols).zip(out.data_mut().chunks_mut(cols)) {
        softmax_into(src, dst);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_clips_negatives() {
        let y = apply_activation(Activation::Relu, &Tensor::vector(vec![-1.0, 3.0]));
        assert_eq!(y.data(), &[0.0, 3.0]);
    }

    #[test]
    fn soft_threshold_shrinks() {
        let y = apply_activation(
            Activation::SoftThreshold(1.0),
            &Tensor::vector(vec![2.0, -0.5, 0.0]),
        );
        assert_eq!(y.data(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
    }

    #[test]
    fn softsign_is_odd_and_bounded() {
        assert_eq!(Activation::Softsign.apply(0.0), 0.0);
        for x in [-1e6, -3.0, -0.1, 0.1, 3.0, 1e6] {
            let y = Activation::Softsign.apply(x);
            assert!(y.abs() < 1.0);
            assert_eq!(Activation::Softsign.apply(-x), -y);
        }
        assert!(Activation::Softsign.apply(1.0) < Activation::Softsign.apply(2.0));
    }

    #[test]
    fn tanh_interval_stays_inside() {
        let act = Activation::TanhInterval { a: -2.0, b: 5.0 };
        assert!((act.apply(0.0) - 1.5).abs() < 1e-15);
        assert!(act.apply(-50.0) >= -2.0 && act.apply(50.0) <= 5.0);
    }

    #[test]
    fn softplus_is_stable_for_large_inputs() {
        assert!((Activation::Softplus.apply(800.0) - 800.0).abs() < 1e-9);
        assert!(Activation::Softplus.apply(-800.0) >= 0.0);
        assert!((Activation::Softplus.apply(0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&Tensor::vector(vec![0.0, 0.0]));
        assert_eq!(p.data(), &[0.5, 0.5]);
        for c in [-1e3, 0.0, 7.5, 1e3] {
            let p = softmax(&Tensor::vector(vec![c, c, c]));
            for v in p.data() {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        let p = softmax(&Tensor::vector(vec![1f64.ln(), 2f64.ln(), 3f64.ln()]));
        for (v, e) in p.data().iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((v - e).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_is_row_wise_on_matrices() {
        let p = softmax(&Tensor::matrix(2, 2, vec![0.0, 0.0, 0.0, 100.0]));
        assert_eq!(p.row(0), &[0.5, 0.5]);
        assert!(p.row(1)[1] > 0.999);
    }
}
