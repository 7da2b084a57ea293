//! Gradient messages of the Gaussian log-joint.

use mbdl_sim::StateSpaceModel;
use nalgebra::DVector;

use crate::error::SmoothingError;

/// The three messages arriving at each `S_t`. Missing neighbors (the future
/// of the last step) contribute zero. The past neighbor of the first step is
/// the known `s_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanMessages {
    /// `μ_{S_{t-1}→S_t} = -W⁻¹(ŝ_t - F_t ŝ_{t-1})`.
    pub from_past: Vec<DVector<f64>>,
    /// `μ_{S_{t+1}→S_t} = F_{t+1}ᵀ W⁻¹(ŝ_{t+1} - F_{t+1} ŝ_t)`.
    pub from_future: Vec<DVector<f64>>,
    /// `μ_{X_t→S_t} = Hᵀ R⁻¹(x_t - H ŝ_t)`.
    pub from_obs: Vec<DVector<f64>>,
}

impl KalmanMessages {
    pub fn len(&self) -> usize {
        self.from_past.len()
    }

    pub fn is_empty(&self) -> bool {
        self.from_past.is_empty()
    }

    /// `∂/∂ŝ_t log p(x, ŝ)`.
    pub fn sum(&self, t: usize) -> DVector<f64> {
        &self.from_past[t] + &self.from_future[t] + &self.from_obs[t]
    }
}

pub(crate) fn check_shapes(s: &[DVector<f64>], x: &[DVector<f64>], model: &StateSpaceModel) -> Result<(), SmoothingError> {
    if s.is_empty() {
        return Err(SmoothingError::Empty);
    }
    if s.len() != x.len() {
        return Err(SmoothingError::Shape(format!("{} states for {} observations", s.len(), x.len())));
    }
    if let Some(h) = model.horizon() {
        if s.len() > h {
            return Err(SmoothingError::Shape(format!("model covers {h} steps, trajectory has {}", s.len())));
        }
    }
    if s.iter().any(|v| v.len() != model.state_dim()) || x.iter().any(|v| v.len() != model.obs_dim()) {
        return Err(SmoothingError::Shape("vector dimensions do not match the model".into()));
    }
    Ok(())
}

pub fn kalman_messages(
    s: &[DVector<f64>],
    x: &[DVector<f64>],
    model: &StateSpaceModel,
) -> Result<KalmanMessages, SmoothingError> {
    check_shapes(s, x, model)?;
    let t_len = s.len();
    // W⁻¹(ŝ_t - F_t ŝ_{t-1}) for every t.
    let innov: Vec<DVector<f64>> = (0..t_len)
        .map(|t| {
            let prev = if t == 0 { model.s0() } else { &s[t - 1] };
            model.w_chol().solve(&(&s[t] - model.f(t) * prev))
        })
        .collect();
    let from_past = innov.iter().map(|v| -v).collect();
    let from_future = (0..t_len)
        .map(|t| {
            if t + 1 < t_len {
                model.f(t + 1).tr_mul(&innov[t + 1])
            } else {
                DVector::zeros(model.state_dim())
            }
        })
        .collect();
    let h = model.h_obs();
    let from_obs = s
        .iter()
        .zip(x)
        .map(|(st, xt)| h.tr_mul(&model.r_chol().solve(&(xt - h * st))))
        .collect();
    Ok(KalmanMessages {
        from_past,
        from_future,
        from_obs,
    })
}

/// `log p(x, s)` up to the normalizing constant:
/// `-½ Σ ‖s_t - F_t s_{t-1}‖²_{W⁻¹} - ½ Σ ‖x_t - H s_t‖²_{R⁻¹}`.
pub fn log_joint(s: &[DVector<f64>], x: &[DVector<f64>], model: &StateSpaceModel) -> Result<f64, SmoothingError> {
    check_shapes(s, x, model)?;
    let mut total = 0.0;
    for t in 0..s.len() {
        let prev = if t == 0 { model.s0() } else { &s[t - 1] };
        let d = &s[t] - model.f(t) * prev;
        total -= 0.5 * d.dot(&model.w_chol().solve(&d));
        let e = &x[t] - model.h_obs() * &s[t];
        total -= 0.5 * e.dot(&model.r_chol().solve(&e));
    }
    Ok(total)
}
