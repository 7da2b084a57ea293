//! LASSO: `min_c ‖x − H B c‖² + λ‖c‖₁`, solved three independent ways.
//!
//! The objective carries no ½ in front of the data term, so proximal
//! thresholds are `ηλ/2` (ISTA) and `αλ/2` (ADMM).

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::InverseError;
use crate::soft_threshold_vec;

#[derive(Debug, Clone, PartialEq)]
pub struct LassoProblem {
    pub h: DMatrix<f64>,
    pub x: DVector<f64>,
    pub lambda: f64,
    /// Synthesis dictionary; identity when `None`.
    pub b: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    /// Coefficients `c` (equal to the signal when there is no dictionary).
    pub coef: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every iteration.
    pub history: Vec<f64>,
    pub warnings: Vec<String>,
}

impl LassoProblem {
    pub fn new(h: DMatrix<f64>, x: DVector<f64>, lambda: f64) -> Result<Self, InverseError> {
        if h.nrows() != x.len() {
            return Err(InverseError::Shape(format!("H has {} rows, x has {}", h.nrows(), x.len())));
        }
        if !(lambda >= 0.0) {
            return Err(InverseError::InvalidParameter(format!("λ must be non-negative, got {lambda}")));
        }
        Ok(Self { h, x, lambda, b: None })
    }

    pub fn with_dictionary(mut self, b: DMatrix<f64>) -> Result<Self, InverseError> {
        if b.nrows() != self.h.ncols() {
            return Err(InverseError::Shape("dictionary rows must match H columns".into()));
        }
        self.b = Some(b);
        Ok(self)
    }

    /// `H B`.
    pub fn operator(&self) -> DMatrix<f64> {
        match &self.b {
            Some(b) => &self.h * b,
            None => self.h.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.b.as_ref().map_or(self.h.ncols(), |b| b.ncols())
    }

    pub fn objective(&self, c: &DVector<f64>) -> f64 {
        objective_with(&self.operator(), &self.x, self.lambda, c)
    }

    /// Signal `B c`.
    pub fn signal(&self, c: &DVector<f64>) -> DVector<f64> {
        match &self.b {
            Some(b) => b * c,
            None => c.clone(),
        }
    }
}

fn objective_with(a: &DMatrix<f64>, x: &DVector<f64>, lambda: f64, c: &DVector<f64>) -> f64 {
    (x - a * c).norm_squared() + lambda * c.lp_norm(1)
}

/// Largest eigenvalue of `AᵀA` by power iteration from the all-ones vector.
pub fn spectral_norm_sq(a: &DMatrix<f64>, iterations: usize) -> f64 {
    let ata = a.transpose() * a;
    let mut v = DVector::from_element(ata.ncols(), 1.0 / (ata.ncols() as f64).sqrt());
    let mut est = 0.0;
    for _ in 0..iterations {
        let w = &ata * &v;
        let n = w.norm();
        if n == 0.0 {
            return 0.0;
        }
        est = n;
        v = w / n;
    }
    // Rayleigh quotient is at least as accurate as the norm ratio.
    est.max(v.dot(&(&ata * &v)))
}

/// Cyclic coordinate minimization. Stops when a full sweep lowers the
/// objective by less than `tol`.
pub fn lasso_coordinate_descent(p: &LassoProblem, tol: f64, max_sweeps: usize) -> SolveResult {
    let a = p.operator();
    let n = a.ncols();
    let col_sq: Vec<f64> = (0..n).map(|i| a.column(i).norm_squared()).collect();
    let mut c = DVector::zeros(n);
    let mut residual = p.x.clone();
    let mut obj = objective_with(&a, &p.x, p.lambda, &c);
    let mut best = (obj, c.clone());
    let mut history = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        for i in 0..n {
            if col_sq[i] == 0.0 {
                continue;
            }
            let old = c[i];
            let rho = a.column(i).dot(&residual) + col_sq[i] * old;
            let new = crate::soft_threshold(rho, p.lambda / 2.0) / col_sq[i];
            if new != old {
                residual.axpy(old - new, &a.column(i), 1.0);
                c[i] = new;
            }
        }
        let next = objective_with(&a, &p.x, p.lambda, &c);
        history.push(next);
        if next < best.0 {
            best = (next, c.clone());
        }
        let decrease = obj - next;
        obj = next;
        if decrease < tol {
            converged = true;
            break;
        }
    }
    SolveResult {
        objective: best.0,
        coef: best.1,
        iterations: sweeps,
        converged,
        history,
        warnings: Vec::new(),
    }
}

/// Proximal gradient `c ← T_{ηλ/2}(c − ηAᵀ(Ac − x))`. `eta = None` uses
/// `1/‖AᵀA‖₂`; a larger step is shrunk to that bound with a warning.
pub fn ista_solve(p: &LassoProblem, eta: Option<f64>, tol: f64, max_iters: usize) -> SolveResult {
    let a = p.operator();
    let at = a.transpose();
    let bound = 1.0 / spectral_norm_sq(&a, 500).max(f64::MIN_POSITIVE);
    let mut warnings = Vec::new();
    let eta = match eta {
        Some(e) if e > bound => {
            warnings.push(format!("step {e} exceeds 1/‖HᵀH‖ = {bound}; using the bound"));
            bound
        }
        Some(e) => e,
        None => bound,
    };
    let mut c = DVector::zeros(a.ncols());
    let mut obj = objective_with(&a, &p.x, p.lambda, &c);
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let grad = &at * (&a * &c - &p.x);
        c = soft_threshold_vec(&(&c - grad * eta), eta * p.lambda / 2.0);
        let next = objective_with(&a, &p.x, p.lambda, &c);
        history.push(next);
        let decrease = obj - next;
        obj = next;
        if decrease.abs() < tol {
            converged = true;
            break;
        }
    }
    SolveResult {
        coef: c,
        objective: obj,
        iterations,
        converged,
        history,
        warnings,
    }
}

/// ADMM iterates `(ŝ, v, u)` after each step.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmStep {
    pub s: DVector<f64>,
    pub v: DVector<f64>,
    pub u: DVector<f64>,
}

/// Scaled ADMM on `½‖x − As‖² + φ(v)` subject to `s = v`:
///
/// `ŝ = (αAᵀA + I)⁻¹(αAᵀx + v − u)`, `v = prox(ŝ + u, q)`, `u ← u + ŝ − v`.
///
/// `prox(input, q)` is the step-3 map at iteration `q`. Runs until both the
/// primal residual `‖ŝ − v‖` and the dual residual `‖v_q − v_{q−1}‖/α` drop
/// below `tol` (when given), or for `max_iters`. Returns every step.
pub fn admm_core<F>(
    a: &DMatrix<f64>,
    x: &DVector<f64>,
    alpha: f64,
    mut prox: F,
    tol: Option<f64>,
    max_iters: usize,
) -> Result<(Vec<AdmmStep>, bool), InverseError>
where
    F: FnMut(&DVector<f64>, usize) -> DVector<f64>,
{
    if !(alpha > 0.0) {
        return Err(InverseError::InvalidParameter(format!("α must be positive, got {alpha}")));
    }
    let n = a.ncols();
    let system = a.transpose() * a * alpha + DMatrix::identity(n, n);
    let chol = Cholesky::new(system).ok_or_else(|| InverseError::Numerical("αHᵀH + I not definite".into()))?;
    let ahx = a.transpose() * x * alpha;
    let mut v = DVector::zeros(n);
    let mut u = DVector::zeros(n);
    let mut steps = Vec::new();
    for q in 0..max_iters {
        let s = chol.solve(&(&ahx + &v - &u));
        let v_next = prox(&(&s + &u), q);
        if s.iter().chain(v_next.iter()).any(|t| !t.is_finite()) {
            return Err(InverseError::NonFinite { iteration: q });
        }
        u = &u + &s - &v_next;
        let dual = (&v_next - &v).norm() / alpha;
        v = v_next;
        let gap = (&s - &v).norm();
        steps.push(AdmmStep {
            s,
            v: v.clone(),
            u: u.clone(),
        });
        if tol.is_some_and(|t| gap < t && dual < t) {
            return Ok((steps, true));
        }
    }
    Ok((steps, false))
}

/// Raw ADMM trajectory for the LASSO.
pub fn admm_lasso_steps(
    p: &LassoProblem,
    alpha: f64,
    tol: Option<f64>,
    max_iters: usize,
) -> Result<(Vec<AdmmStep>, bool), InverseError> {
    let threshold = alpha * p.lambda / 2.0;
    admm_core(&p.operator(), &p.x, alpha, |z, _| soft_threshold_vec(z, threshold), tol, max_iters)
}

/// ADMM for the LASSO: the prox of `(λ/2)‖·‖₁` scaled by `α` is soft
/// thresholding at `αλ/2`.
pub fn admm_solve(p: &LassoProblem, alpha: f64, tol: f64, max_iters: usize) -> Result<SolveResult, InverseError> {
    let a = p.operator();
    let (steps, converged) = admm_lasso_steps(p, alpha, Some(tol), max_iters)?;
    let history: Vec<f64> = steps.iter().map(|st| objective_with(&a, &p.x, p.lambda, &st.s)).collect();
    // Converged runs return the final iterate, others the best one seen.
    let pick = if converged {
        steps.len().checked_sub(1)
    } else {
        (0..steps.len()).min_by(|&i, &j| history[i].total_cmp(&history[j]))
    };
    let coef = pick.map_or_else(|| DVector::zeros(a.ncols()), |i| steps[i].s.clone());
    Ok(SolveResult {
        objective: objective_with(&a, &p.x, p.lambda, &coef),
        coef,
        iterations: steps.len(),
        converged,
        history,
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unregularized_identity_returns_observation() {
        let x = DVector::from_vec(vec![0.5, -2.0, 3.0]);
        let p = LassoProblem::new(DMatrix::identity(3, 3), x.clone(), 0.0).unwrap();
        let cd = lasso_coordinate_descent(&p, 1e-14, 100);
        assert!((cd.coef - &x).amax() < 1e-12);
        let ista = ista_solve(&p, Some(1.0), 1e-14, 1);
        assert!((ista.coef - &x).amax() < 1e-12);
    }

    #[test]
    fn identity_is_separable_soft_threshold() {
        let x = DVector::from_vec(vec![0.2, -1.5, 0.7]);
        let p = LassoProblem::new(DMatrix::identity(3, 3), x.clone(), 1.0).unwrap();
        let cd = lasso_coordinate_descent(&p, 1e-14, 100);
        let expect = x.map(|v| crate::soft_threshold(v, 0.5));
        assert!((cd.coef - expect).amax() < 1e-12);
    }

    #[test]
    fn zero_observation_gives_zero() {
        let h = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.5, -1.0, 0.3, 0.8]);
        let p = LassoProblem::new(h, DVector::zeros(2), 0.3).unwrap();
        assert!(ista_solve(&p, None, 1e-12, 100).coef.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn oversized_step_is_shrunk() {
        let p = LassoProblem::new(DMatrix::identity(2, 2) * 2.0, DVector::from_vec(vec![1.0, 1.0]), 0.1).unwrap();
        let r = ista_solve(&p, Some(10.0), 1e-12, 50);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn admm_identity_update_is_average() {
        let x = DVector::from_vec(vec![1.0, -3.0]);
        let (steps, _) = admm_core(&DMatrix::identity(2, 2), &x, 1.0, |z, _| z * 0.5, None, 2).unwrap();
        // First step: v = u = 0, so ŝ = x/2.
        assert!((&steps[0].s - &x * 0.5).amax() < 1e-15);
        let expect = (&x + &steps[0].v - &steps[0].u) / 2.0;
        assert!((&steps[1].s - expect).amax() < 1e-15);
    }

    #[test]
    fn power_iteration_finds_top_eigenvalue() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 0.5]));
        assert!((spectral_norm_sq(&a, 200) - 9.0).abs() < 1e-9);
    }
}
