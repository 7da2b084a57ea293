//! Lorenz attractor ground truth and its Taylor-linearized state-space
//! approximation.
//!
//! The dynamics `ṡ = f(s)` are written as `ṡ = A(s) s` with
//!
//! ```text
//!        [ -σ     σ    0 ]
//! A(s) = [ ρ - z  -1   0 ]
//!        [  0     x   -β ]
//! ```
//!
//! so that `A(s) s = f(s)` exactly. Freezing `A` at a state and truncating the
//! matrix exponential gives the order-`j` transition
//! `F = Σ_{k=0..j} (A Δt)^k / k!`.

use nalgebra::{DMatrix, DVector, Vector3};
use rand_distr::{Distribution, Normal};

use crate::error::SimError;
use crate::rng::seeded;
use crate::state_space::{StateSpaceModel, Transitions};

#[derive(Debug, Clone, PartialEq)]
pub struct LorenzSystem {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    pub dt: f64,
    /// RK4 sub-steps per `dt` for the ground truth.
    pub substeps: usize,
    /// Observation noise variance; `R = obs_var · I`.
    pub obs_var: f64,
    /// Standard deviation of additive process noise on the ground truth.
    pub process_std: f64,
    /// Steps discarded before a trajectory starts, so it lies on the attractor.
    pub burn_in: usize,
}

impl Default for LorenzSystem {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
            dt: 0.02,
            substeps: 10,
            obs_var: 0.1,
            process_std: 0.0,
            burn_in: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LorenzTrajectory {
    /// State preceding the first step.
    pub s0: DVector<f64>,
    pub s: Vec<DVector<f64>>,
    pub x: Vec<DVector<f64>>,
}

impl LorenzSystem {
    pub fn derivative(&self, s: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(
            self.sigma * (s.y - s.x),
            s.x * (self.rho - s.z) - s.y,
            s.x * s.y - self.beta * s.z,
        )
    }

    pub fn rk4(&self, s: &Vector3<f64>, h: f64) -> Vector3<f64> {
        let k1 = self.derivative(s);
        let k2 = self.derivative(&(s + k1 * (h / 2.0)));
        let k3 = self.derivative(&(s + k2 * (h / 2.0)));
        let k4 = self.derivative(&(s + k3 * h));
        s + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
    }

    /// Advances the true dynamics by one `dt`.
    pub fn step(&self, s: &Vector3<f64>) -> Vector3<f64> {
        let h = self.dt / self.substeps as f64;
        let mut out = *s;
        for _ in 0..self.substeps {
            out = self.rk4(&out, h);
        }
        out
    }

    pub fn dynamics_matrix(&self, s: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            3,
            3,
            &[
                -self.sigma, self.sigma, 0.0, //
                self.rho - s[2], -1.0, 0.0, //
                0.0, s[0], -self.beta,
            ],
        )
    }

    /// Order-`j` Taylor transition frozen at `around`.
    pub fn taylor_transition(&self, j: usize, around: &DVector<f64>) -> Result<DMatrix<f64>, SimError> {
        taylor_matrix(&self.dynamics_matrix(around), self.dt, j)
    }

    pub fn simulate(&self, t: usize, seed: u64) -> Result<LorenzTrajectory, SimError> {
        if t == 0 {
            return Err(SimError::InvalidArgument("trajectory length must be positive".into()));
        }
        let mut rng = seeded(seed);
        let unit = Normal::new(0.0, 1.0).expect("valid std");
        let obs = Normal::new(0.0, self.obs_var.sqrt())
            .map_err(|e| SimError::InvalidModel(format!("observation variance: {e}")))?;
        let mut s = Vector3::new(
            1.0 + unit.sample(&mut rng),
            1.0 + unit.sample(&mut rng),
            1.0 + unit.sample(&mut rng),
        );
        for _ in 0..self.burn_in {
            s = self.step(&s);
        }
        let s0 = DVector::from_column_slice(s.as_slice());
        let mut states = Vec::with_capacity(t);
        let mut xs = Vec::with_capacity(t);
        for _ in 0..t {
            s = self.step(&s);
            if self.process_std > 0.0 {
                for v in s.iter_mut() {
                    *v += self.process_std * unit.sample(&mut rng);
                }
            }
            let x = DVector::from_iterator(3, s.iter().map(|&v| v + obs.sample(&mut rng)));
            states.push(DVector::from_column_slice(s.as_slice()));
            xs.push(x);
        }
        Ok(LorenzTrajectory { s0, s: states, x: xs })
    }

    /// Linear model with `F_t` frozen at the true state preceding step `t`,
    /// `H = I`, `R = obs_var · I` and the given process covariance.
    pub fn assumed_model(
        &self,
        j: usize,
        trajectory: &LorenzTrajectory,
        w: DMatrix<f64>,
    ) -> Result<StateSpaceModel, SimError> {
        let mut fs = Vec::with_capacity(trajectory.s.len());
        let mut prev = &trajectory.s0;
        for s in &trajectory.s {
            fs.push(self.taylor_transition(j, prev)?);
            prev = s;
        }
        StateSpaceModel::new(
            Transitions::PerStep(fs),
            DMatrix::identity(3, 3),
            w,
            DMatrix::identity(3, 3) * self.obs_var,
            trajectory.s0.clone(),
        )
    }
}

/// `Σ_{k=0..j} (A Δt)^k / k!` for `j ∈ 1..=5`.
pub fn taylor_matrix(a: &DMatrix<f64>, dt: f64, j: usize) -> Result<DMatrix<f64>, SimError> {
    if !(1..=5).contains(&j) {
        return Err(SimError::InvalidArgument(format!("Taylor order must be in 1..=5, got {j}")));
    }
    if !(dt > 0.0) {
        return Err(SimError::InvalidArgument(format!("Δt must be positive, got {dt}")));
    }
    let n = a.nrows();
    let ad = a * dt;
    let mut term = DMatrix::identity(n, n);
    let mut out = term.clone();
    for k in 1..=j {
        term = &term * &ad / k as f64;
        out += &term;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorization_reproduces_vector_field() {
        let sys = LorenzSystem::default();
        let s = Vector3::new(1.5, -2.0, 20.0);
        let a = sys.dynamics_matrix(&DVector::from_column_slice(s.as_slice()));
        let lhs = &a * DVector::from_column_slice(s.as_slice());
        let rhs = sys.derivative(&s);
        for i in 0..3 {
            assert!((lhs[i] - rhs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn order_out_of_range_fails() {
        let a = DMatrix::identity(3, 3);
        assert!(taylor_matrix(&a, 0.1, 0).is_err());
        assert!(taylor_matrix(&a, 0.1, 6).is_err());
    }

    #[test]
    fn small_step_limit_is_first_order() {
        let sys = LorenzSystem {
            dt: 1e-6,
            ..Default::default()
        };
        let at = DVector::from_vec(vec![3.0, -1.0, 25.0]);
        let a = sys.dynamics_matrix(&at);
        let expect = DMatrix::identity(3, 3) + &a * 1e-6;
        for j in 1..=5 {
            let f = sys.taylor_transition(j, &at).unwrap();
            assert!((f - &expect).amax() <= 1e-9);
        }
    }
}
