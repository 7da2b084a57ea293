use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_distr::{Distribution, StandardNormal};

use crate::error::SimError;
use crate::rng::seeded;

/// State transition matrices: one shared `F`, or one per time step (for
/// models linearized along a trajectory).
#[derive(Debug, Clone, PartialEq)]
pub enum Transitions {
    Constant(DMatrix<f64>),
    PerStep(Vec<DMatrix<f64>>),
}

/// `s_t = F_t s_{t-1} + w_t`, `x_t = H s_t + r_t`, `w ~ N(0, W)`,
/// `r ~ N(0, R)`, with `s_0` given. Time steps are indexed `0..T` in code,
/// `F_t` maps step `t-1` (or `s_0` when `t = 0`) to step `t`.
#[derive(Debug, Clone)]
pub struct StateSpaceModel {
    transitions: Transitions,
    h_obs: DMatrix<f64>,
    w: DMatrix<f64>,
    r: DMatrix<f64>,
    s0: DVector<f64>,
    w_chol: Cholesky<f64, Dyn>,
    r_chol: Cholesky<f64, Dyn>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub s: Vec<DVector<f64>>,
    pub x: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

fn spd_factor(m: &DMatrix<f64>, name: &str) -> Result<Cholesky<f64, Dyn>, SimError> {
    if !m.is_square() {
        return Err(SimError::InvalidModel(format!("{name} must be square")));
    }
    if (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
        return Err(SimError::InvalidModel(format!("{name} must be symmetric")));
    }
    Cholesky::new(m.clone()).ok_or_else(|| SimError::InvalidModel(format!("{name} is not positive definite")))
}

impl StateSpaceModel {
    pub fn new(
        transitions: Transitions,
        h_obs: DMatrix<f64>,
        w: DMatrix<f64>,
        r: DMatrix<f64>,
        s0: DVector<f64>,
    ) -> Result<Self, SimError> {
        let ds = s0.len();
        let check_f = |f: &DMatrix<f64>| f.nrows() == ds && f.ncols() == ds;
        let ok = match &transitions {
            Transitions::Constant(f) => check_f(f),
            Transitions::PerStep(fs) => !fs.is_empty() && fs.iter().all(check_f),
        };
        if !ok {
            return Err(SimError::InvalidModel(format!("transition matrices must be {ds}×{ds}")));
        }
        if h_obs.ncols() != ds || h_obs.nrows() == 0 {
            return Err(SimError::InvalidModel(format!("observation matrix must have {ds} columns")));
        }
        if w.nrows() != ds {
            return Err(SimError::InvalidModel("W must match the state dimension".into()));
        }
        if r.nrows() != h_obs.nrows() {
            return Err(SimError::InvalidModel("R must match the observation dimension".into()));
        }
        let w_chol = spd_factor(&w, "W")?;
        let r_chol = spd_factor(&r, "R")?;
        Ok(Self {
            transitions,
            h_obs,
            w,
            r,
            s0,
            w_chol,
            r_chol,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.s0.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.h_obs.nrows()
    }

    pub fn transitions(&self) -> &Transitions {
        &self.transitions
    }

    /// `F_t`. Per-step models panic when `t` is out of range.
    pub fn f(&self, t: usize) -> &DMatrix<f64> {
        match &self.transitions {
            Transitions::Constant(f) => f,
            Transitions::PerStep(fs) => &fs[t],
        }
    }

    /// Number of steps a per-step model covers, `None` when constant.
    pub fn horizon(&self) -> Option<usize> {
        match &self.transitions {
            Transitions::Constant(_) => None,
            Transitions::PerStep(fs) => Some(fs.len()),
        }
    }

    pub fn h_obs(&self) -> &DMatrix<f64> {
        &self.h_obs
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn s0(&self) -> &DVector<f64> {
        &self.s0
    }

    pub fn w_chol(&self) -> &Cholesky<f64, Dyn> {
        &self.w_chol
    }

    pub fn r_chol(&self) -> &Cholesky<f64, Dyn> {
        &self.r_chol
    }

    pub fn with_transitions(&self, transitions: Transitions) -> Result<Self, SimError> {
        Self::new(transitions, self.h_obs.clone(), self.w.clone(), self.r.clone(), self.s0.clone())
    }

    pub fn with_s0(&self, s0: DVector<f64>) -> Result<Self, SimError> {
        Self::new(self.transitions.clone(), self.h_obs.clone(), self.w.clone(), self.r.clone(), s0)
    }

    pub fn sample(&self, t: usize, seed: u64) -> Result<Trajectory, SimError> {
        if t == 0 {
            return Err(SimError::InvalidArgument("trajectory length must be positive".into()));
        }
        if let Some(h) = self.horizon() {
            if t > h {
                return Err(SimError::InvalidArgument(format!("model covers {h} steps, asked for {t}")));
            }
        }
        let mut rng = seeded(seed);
        let mut normal = |n: usize| DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
        let lw = self.w_chol.l();
        let lr = self.r_chol.l();
        let mut s = Vec::with_capacity(t);
        let mut x = Vec::with_capacity(t);
        let mut prev = self.s0.clone();
        for step in 0..t {
            let next = self.f(step) * &prev + &lw * normal(self.state_dim());
            let obs = &self.h_obs * &next + &lr * normal(self.obs_dim());
            s.push(next.clone());
            x.push(obs);
            prev = next;
        }
        Ok(Trajectory { s, x })
    }
}
