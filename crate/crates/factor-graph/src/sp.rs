//! Forward-backward sum-product on the chain.

use crate::error::FgError;
use crate::node::FunctionNode;
use crate::argmax;

#[derive(Debug, Clone, PartialEq)]
pub struct MessageTable {
    /// `μ_f[i][s̄]` for `i = 0..=T`.
    pub forward: Vec<Vec<f64>>,
    /// `μ_b[i][s̄]` for `i = 0..=T`.
    pub backward: Vec<Vec<f64>>,
    /// `γ_i` applied to `μ_f[i]`; all ones without normalization.
    pub scales: Vec<f64>,
    /// `P(s_i = a | x)` for each of the `T` symbols.
    pub marginals: Vec<Vec<f64>>,
}

/// Window `(s_{1-J}, …, s_0)`, oldest first, to a state index.
fn initial_state(window: &[usize], m: usize, j: usize) -> Result<usize, FgError> {
    if window.len() != j || window.iter().any(|&s| s >= m) {
        return Err(FgError::InvalidConfig(format!(
            "initial window {window:?} is not {j} symbols below {m}"
        )));
    }
    Ok(window.iter().fold(0, |acc, &s| acc * m + s))
}

fn rescale(v: &mut [f64]) -> f64 {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        let g = 1.0 / total;
        v.iter_mut().for_each(|p| *p *= g);
        g
    } else {
        0.0
    }
}

/// Runs the backward then the forward recursion and forms per-symbol
/// posteriors. With `normalize` every message is scaled to sum to one.
/// `initial = None` starts from a uniform `μ_f[0]`.
pub fn sp_posteriors(
    xs: &[f64],
    node: &dyn FunctionNode,
    initial: Option<&[usize]>,
    normalize: bool,
) -> Result<MessageTable, FgError> {
    if xs.is_empty() {
        return Err(FgError::EmptySequence);
    }
    let (m, j) = (node.alphabet(), node.memory());
    if m == 0 || j == 0 {
        return Err(FgError::InvalidConfig("need |S| ≥ 1 and J ≥ 1".into()));
    }
    let states = node.num_states();
    let t_len = xs.len();

    // Shifting each index's log-factors by their maximum rescales that
    // node by a constant, which leaves every posterior unchanged.
    let mut factors = node.log_factor_tables(xs);
    for (i, row) in factors.iter_mut().enumerate() {
        let top = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY || top.is_nan() {
            return Err(FgError::ZeroMessage { index: i });
        }
        row.iter_mut().for_each(|v| *v = (*v - top).exp());
    }

    let mut backward = vec![vec![0.0; states]; t_len + 1];
    backward[t_len] = vec![1.0; states];
    if normalize {
        rescale(&mut backward[t_len]);
    }
    for i in (1..=t_len).rev() {
        let f = &factors[i - 1];
        let mut msg = vec![0.0; states];
        for (prev, out) in msg.iter_mut().enumerate() {
            for sym in 0..m {
                *out += f[prev * m + sym] * backward[i][node.next_state(prev, sym)];
            }
        }
        if msg.iter().all(|&v| v == 0.0) {
            return Err(FgError::ZeroMessage { index: i - 1 });
        }
        if normalize {
            rescale(&mut msg);
        }
        backward[i - 1] = msg;
    }

    let mut forward = vec![vec![0.0; states]; t_len + 1];
    let mut scales = vec![1.0; t_len + 1];
    forward[0] = match initial {
        Some(w) => {
            let mut v = vec![0.0; states];
            v[initial_state(w, m, j)?] = 1.0;
            v
        }
        None => vec![1.0; states],
    };
    if normalize {
        scales[0] = rescale(&mut forward[0]);
    }
    for i in 1..=t_len {
        let f = &factors[i - 1];
        let mut msg = vec![0.0; states];
        for prev in 0..states {
            let a = forward[i - 1][prev];
            if a == 0.0 {
                continue;
            }
            for sym in 0..m {
                msg[node.next_state(prev, sym)] += a * f[prev * m + sym];
            }
        }
        if msg.iter().all(|&v| v == 0.0) {
            return Err(FgError::ZeroMessage { index: i - 1 });
        }
        if normalize {
            scales[i] = rescale(&mut msg);
        }
        forward[i] = msg;
    }

    let marginals = (1..=t_len)
        .map(|i| {
            let mut p = vec![0.0; m];
            for s in 0..states {
                p[s % m] += forward[i][s] * backward[i][s];
            }
            let total: f64 = p.iter().sum();
            p.iter_mut().for_each(|v| *v /= total);
            p
        })
        .collect();
    Ok(MessageTable {
        forward,
        backward,
        scales,
        marginals,
    })
}

/// Per-symbol MAP decisions from normalized sum-product messages; ties go to
/// the lowest symbol index.
pub fn sp_map_detect(xs: &[f64], node: &dyn FunctionNode, initial: Option<&[usize]>) -> Result<Vec<usize>, FgError> {
    Ok(sp_posteriors(xs, node, initial, true)?
        .marginals
        .iter()
        .map(|p| argmax(p))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Memoryless binary node: `f = p(x | s)` with a hard 0/1 likelihood.
    struct Hard;

    impl FunctionNode for Hard {
        fn alphabet(&self) -> usize {
            2
        }
        fn memory(&self) -> usize {
            1
        }
        fn log_factor(&self, x: f64, _: usize, sym: usize) -> f64 {
            if (x > 0.0) == (sym == 1) {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
    }

    #[test]
    fn degenerate_likelihood_recovers_truth() {
        let xs = [1.0, -1.0, -2.0, 0.5, 3.0];
        assert_eq!(sp_map_detect(&xs, &Hard, None).unwrap(), vec![1, 0, 0, 1, 1]);
    }

    #[test]
    fn messages_are_normalized() {
        let t = sp_posteriors(&[1.0, -1.0], &Hard, None, true).unwrap();
        for m in t.forward.iter().chain(&t.backward) {
            assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            assert!(m.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn empty_sequence_fails() {
        assert!(matches!(sp_map_detect(&[], &Hard, None), Err(FgError::EmptySequence)));
    }

    #[test]
    fn bad_initial_window_fails() {
        assert!(sp_map_detect(&[1.0], &Hard, Some(&[2])).is_err());
    }
}
