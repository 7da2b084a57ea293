//! Synthetic signal families with known structure.

use mbdl_autodiff::{toeplitz_matrix, Tensor};
use mbdl_sim::poisson_draw;
use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// `k`-sparse vector: random support, amplitudes `±(1 + U[0,1))`.
pub fn sparse_vector<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> DVector<f64> {
    let mut v = DVector::zeros(n);
    for i in sample(rng, n, k.min(n)).into_iter() {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        v[i] = sign * (1.0 + rng.random::<f64>());
    }
    v
}

/// Sum of three low-frequency cosines with Gaussian amplitudes.
pub fn smooth_signal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    let mut v = DVector::zeros(n);
    for f in 1..=3 {
        let a = normal(rng) / f as f64;
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        for t in 0..n {
            v[t] += a * (std::f64::consts::TAU * f as f64 * t as f64 / n as f64 + phase).cos();
        }
    }
    v
}

/// `n×l` matrix with orthonormal columns (Gram-Schmidt on a Gaussian draw).
pub fn subspace_basis<R: Rng + ?Sized>(n: usize, l: usize, rng: &mut R) -> DMatrix<f64> {
    let raw = DMatrix::from_fn(n, l, |_, _| normal(rng));
    raw.qr().q()
}

/// `B z` with `z ~ N(0, I)`.
pub fn subspace_signal<R: Rng + ?Sized>(basis: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let z = DVector::from_fn(basis.ncols(), |_, _| normal(rng));
    basis * z
}

/// Planted Poisson convolutional sample: sparse code, clean mean
/// `μ = exp(H s)` and observation `x ~ Poisson(μ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvSample {
    pub code: DVector<f64>,
    pub mean: DVector<f64>,
    pub x: DVector<f64>,
}

/// Each code entry is active with probability `density`, amplitude
/// `U[lo, hi)`. `kernels` is `[C, L]`.
pub fn conv_sample<R: Rng + ?Sized>(
    kernels: &Tensor,
    n: usize,
    density: f64,
    amplitude: (f64, f64),
    rng: &mut R,
) -> ConvSample {
    let h = toeplitz_matrix(kernels, n).to_dmatrix();
    let code = DVector::from_fn(h.ncols(), |_, _| {
        if rng.random_bool(density) {
            rng.random_range(amplitude.0..amplitude.1)
        } else {
            0.0
        }
    });
    let mean = (&h * &code).map(f64::exp);
    let x = mean.map(|m| poisson_draw(m, rng).expect("positive finite rate"));
    ConvSample { code, mean, x }
}

/// A smooth non-negative bump kernel of length `l`, unit peak.
pub fn bump_kernel(l: usize) -> Vec<f64> {
    let c = (l as f64 - 1.0) / 2.0;
    let w = (l as f64 / 4.0).max(0.5);
    (0..l).map(|i| (-((i as f64 - c) / w).powi(2)).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use mbdl_sim::seeded;

    #[test]
    fn sparse_vector_has_requested_support() {
        let v = sparse_vector(16, 3, &mut seeded(1));
        assert_eq!(v.iter().filter(|x| **x != 0.0).count(), 3);
        assert!(v.iter().all(|x| *x == 0.0 || x.abs() >= 1.0));
    }

    #[test]
    fn subspace_basis_is_orthonormal() {
        let b = subspace_basis(10, 3, &mut seeded(2));
        assert!((b.transpose() * &b - DMatrix::<f64>::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn zero_density_gives_unit_mean() {
        let k = Tensor::matrix(1, 3, bump_kernel(3));
        let s = conv_sample(&k, 12, 0.0, (1.0, 2.0), &mut seeded(3));
        assert!(s.mean.iter().all(|&m| m == 1.0));
        assert_eq!(s.code.len(), 10);
    }
}
