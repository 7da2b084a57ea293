//! Gradient-descent smoothing and its exact batch counterpart.

use mbdl_sim::StateSpaceModel;
use nalgebra::{DMatrix, DVector};

use crate::error::SmoothingError;
use crate::messages::{check_shapes, kalman_messages};

/// Divergence threshold on the largest state entry.
pub const DIVERGENCE_NORM: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialGuess {
    Zeros,
    /// `ŝ_t = Hᵀ x_t`.
    ObservationLift,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmootherConfig {
    pub eta: f64,
    pub iters: usize,
    pub init: InitialGuess,
    /// Restarts with `η/2` after a divergence, at most this many times.
    pub max_halvings: usize,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        Self {
            eta: 0.05,
            iters: 100,
            init: InitialGuess::ObservationLift,
            max_halvings: 10,
        }
    }
}

impl SmootherConfig {
    pub fn validate(&self) -> Result<(), SmoothingError> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) || self.iters == 0 {
            return Err(SmoothingError::InvalidConfig(format!(
                "need η ≥ 0 and Q ≥ 1, got η = {}, Q = {}",
                self.eta, self.iters
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmootherOutput {
    pub trajectory: Vec<DVector<f64>>,
    /// Step size of the successful run.
    pub eta: f64,
    pub halvings: usize,
}

pub fn initial_guess(x: &[DVector<f64>], model: &StateSpaceModel, policy: InitialGuess) -> Vec<DVector<f64>> {
    match policy {
        InitialGuess::Zeros => vec![DVector::zeros(model.state_dim()); x.len()],
        InitialGuess::ObservationLift => x.iter().map(|v| model.h_obs().tr_mul(v)).collect(),
    }
}

/// `ŝ_t ← ŝ_t + η Σ μ_t` at every index, all messages taken from the
/// current trajectory.
pub fn smoother_step(
    s: &[DVector<f64>],
    x: &[DVector<f64>],
    model: &StateSpaceModel,
    eta: f64,
) -> Result<Vec<DVector<f64>>, SmoothingError> {
    let m = kalman_messages(s, x, model)?;
    Ok(s.iter().enumerate().map(|(t, st)| st + m.sum(t) * eta).collect())
}

pub(crate) fn diverged(s: &[DVector<f64>]) -> bool {
    s.iter().any(|v| v.iter().any(|e| !e.is_finite() || e.abs() > DIVERGENCE_NORM))
}

fn run_fixed(
    x: &[DVector<f64>],
    model: &StateSpaceModel,
    eta: f64,
    config: &SmootherConfig,
) -> Result<Vec<DVector<f64>>, SmoothingError> {
    let mut s = initial_guess(x, model, config.init);
    for q in 0..config.iters {
        s = smoother_step(&s, x, model, eta)?;
        if diverged(&s) {
            return Err(SmoothingError::Diverged { eta, iteration: q });
        }
    }
    Ok(s)
}

/// `Q` steps of gradient ascent on the log-joint. A divergence restarts
/// from the initial guess with half the step, up to `max_halvings` times,
/// then fails reporting the last step size.
pub fn gradient_smoother(
    x: &[DVector<f64>],
    model: &StateSpaceModel,
    config: &SmootherConfig,
) -> Result<SmootherOutput, SmoothingError> {
    config.validate()?;
    let mut eta = config.eta;
    for halvings in 0..=config.max_halvings {
        match run_fixed(x, model, eta, config) {
            Ok(trajectory) => {
                return Ok(SmootherOutput {
                    trajectory,
                    eta,
                    halvings,
                })
            }
            Err(SmoothingError::Diverged { .. }) if halvings < config.max_halvings => eta /= 2.0,
            Err(e) => return Err(e),
        }
    }
    unreachable!("the last attempt returns")
}

/// Largest eigenvalue of the negative log-joint Hessian for a length-`t_len`
/// trajectory, by power iteration. The Hessian is applied through the
/// messages: `P v = ∇(0) − ∇(v)`.
pub fn lipschitz_bound(model: &StateSpaceModel, t_len: usize, iters: usize) -> Result<f64, SmoothingError> {
    let d = model.state_dim();
    let x = vec![DVector::zeros(model.obs_dim()); t_len];
    let zero = vec![DVector::zeros(d); t_len];
    let g0 = kalman_messages(&zero, &x, model)?;
    let apply = |v: &[DVector<f64>]| -> Result<Vec<DVector<f64>>, SmoothingError> {
        let g = kalman_messages(v, &x, model)?;
        Ok((0..t_len).map(|t| g0.sum(t) - g.sum(t)).collect())
    };
    let norm = |v: &[DVector<f64>]| v.iter().map(|e| e.norm_squared()).sum::<f64>().sqrt();
    // Deterministic start with no symmetry that could hide the top mode.
    let mut v: Vec<DVector<f64>> = (0..t_len)
        .map(|t| DVector::from_fn(d, |i, _| 1.0 + ((t * d + i) as f64 * 0.618).sin()))
        .collect();
    let mut lambda = 0.0;
    for _ in 0..iters.max(1) {
        let n = norm(&v);
        v.iter_mut().for_each(|e| *e /= n);
        let pv = apply(&v)?;
        lambda = v.iter().zip(&pv).map(|(a, b)| a.dot(b)).sum::<f64>();
        v = pv;
    }
    Ok(lambda)
}

/// Solves `∇ log p(x, s) = 0` directly: the stacked precision
/// `P = Σ_t` (transition and observation blocks) is assembled densely and
/// factored by Cholesky.
pub fn batch_map_oracle(x: &[DVector<f64>], model: &StateSpaceModel) -> Result<Vec<DVector<f64>>, SmoothingError> {
    if x.is_empty() {
        return Err(SmoothingError::Empty);
    }
    check_shapes(x.iter().map(|_| DVector::zeros(model.state_dim())).collect::<Vec<_>>().as_slice(), x, model)?;
    let (t_len, d) = (x.len(), model.state_dim());
    let w_inv = model.w_chol().inverse();
    let r_inv = model.r_chol().inverse();
    let h = model.h_obs();
    let obs_block = h.transpose() * &r_inv * h;
    let mut p = DMatrix::<f64>::zeros(t_len * d, t_len * d);
    let mut b = DVector::<f64>::zeros(t_len * d);
    for t in 0..t_len {
        let mut diag = &w_inv + &obs_block;
        if t + 1 < t_len {
            let f = model.f(t + 1);
            diag += f.transpose() * &w_inv * f;
            let off = -(&w_inv * f);
            p.view_mut(((t + 1) * d, t * d), (d, d)).copy_from(&off);
            p.view_mut((t * d, (t + 1) * d), (d, d)).copy_from(&off.transpose());
        }
        p.view_mut((t * d, t * d), (d, d)).copy_from(&diag);
        let mut rhs = h.transpose() * &r_inv * &x[t];
        if t == 0 {
            rhs += &w_inv * model.f(0) * model.s0();
        }
        b.rows_mut(t * d, d).copy_from(&rhs);
    }
    let chol = p.cholesky().ok_or(SmoothingError::Singular)?;
    let sol = chol.solve(&b);
    Ok((0..t_len).map(|t| sol.rows(t * d, d).into_owned()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use mbdl_sim::Transitions;

    fn scalar_model(f: f64, h: f64, w: f64, r: f64, s0: f64) -> StateSpaceModel {
        let m = |v: f64| DMatrix::from_element(1, 1, v);
        StateSpaceModel::new(Transitions::Constant(m(f)), m(h), m(w), m(r), DVector::from_element(1, s0)).unwrap()
    }

    #[test]
    fn zero_step_returns_initial_guess() {
        let model = scalar_model(0.9, 2.0, 1.0, 1.0, 0.0);
        let x: Vec<_> = [1.0, -0.5, 0.3].iter().map(|&v| DVector::from_element(1, v)).collect();
        let cfg = SmootherConfig {
            eta: 0.0,
            ..Default::default()
        };
        let out = gradient_smoother(&x, &model, &cfg).unwrap();
        assert_eq!(out.trajectory, initial_guess(&x, &model, InitialGuess::ObservationLift));
    }

    #[test]
    fn single_step_oracle_is_closed_form() {
        let (f, h, w, r, s0, x) = (0.8, 1.5, 0.5, 0.2, 2.0, 1.0);
        let model = scalar_model(f, h, w, r, s0);
        let got = batch_map_oracle(&[DVector::from_element(1, x)], &model).unwrap()[0][0];
        let want = (h * x / r + f * s0 / w) / (h * h / r + 1.0 / w);
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn divergence_halves_the_step() {
        let model = scalar_model(1.0, 1.0, 1.0, 1.0, 0.0);
        let x: Vec<_> = (0..10).map(|t| DVector::from_element(1, t as f64)).collect();
        let cfg = SmootherConfig {
            eta: 4.0,
            iters: 200,
            ..Default::default()
        };
        let out = gradient_smoother(&x, &model, &cfg).unwrap();
        assert!(out.halvings > 0 && out.eta < 4.0);
        let strict = SmootherConfig {
            max_halvings: 0,
            ..cfg
        };
        assert!(matches!(
            gradient_smoother(&x, &model, &strict),
            Err(SmoothingError::Diverged { eta, .. }) if eta == 4.0
        ));
    }
}
