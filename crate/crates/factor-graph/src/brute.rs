//! Exhaustive per-symbol MAP by enumerating every sequence.

use mbdl_sim::MarkovSequenceModel;

use crate::error::FgError;

pub const MAX_SEQUENCES: u128 = 1 << 20;

/// Enumerates every `s ∈ S^T` (and every initial window when `initial` is
/// `None`, under a uniform prior), accumulates the joint
/// `Π P(s_i | s̄_{i-1}) p(x_i | s_{i-J..i})`, marginalizes per index and
/// takes the argmax, lowest symbol on ties. Returns decisions and
/// marginals.
pub fn brute_force_map(
    xs: &[f64],
    model: &MarkovSequenceModel,
    initial: Option<&[usize]>,
) -> Result<(Vec<usize>, Vec<Vec<f64>>), FgError> {
    let t = xs.len();
    if t == 0 {
        return Err(FgError::EmptySequence);
    }
    let m = model.constellation().len();
    let j = model.memory();
    let free = t + if initial.is_some() { 0 } else { j };
    let candidates = (m as u128).checked_pow(free as u32).unwrap_or(u128::MAX);
    if candidates > MAX_SEQUENCES {
        return Err(FgError::SearchTooLarge {
            candidates,
            limit: MAX_SEQUENCES,
        });
    }
    if let Some(w) = initial {
        if w.len() != j || w.iter().any(|&s| s >= m) {
            return Err(FgError::InvalidConfig(format!("initial window {w:?}")));
        }
    }

    let mut log_joint = Vec::with_capacity(candidates as usize);
    let mut seqs = Vec::with_capacity(candidates as usize);
    let mut full = vec![0usize; j + t];
    for c in 0..candidates as usize {
        // Digits of `c`, first position most significant.
        let mut rest = c;
        for k in (0..free).rev() {
            let d = rest % m;
            rest /= m;
            match initial {
                Some(w) => {
                    full[..j].copy_from_slice(w);
                    full[j + k] = d;
                }
                None => full[k] = d,
            }
        }
        let mut lj = 0.0;
        for i in 0..t {
            let window = &full[i..=i + j];
            let prev = model.state_index(&window[..j]);
            lj += model.transitions()[prev][window[j]].ln() + model.log_likelihood(xs[i], window);
        }
        log_joint.push(lj);
        seqs.push(full[j..].to_vec());
    }
    let top = log_joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Err(FgError::ZeroMessage { index: 0 });
    }
    let mut marginals = vec![vec![0.0; m]; t];
    for (lj, s) in log_joint.iter().zip(&seqs) {
        let w = (lj - top).exp();
        for (i, &sym) in s.iter().enumerate() {
            marginals[i][sym] += w;
        }
    }
    for p in &mut marginals {
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= total);
    }
    let decisions = marginals.iter().map(|p| crate::argmax(p)).collect();
    Ok((decisions, marginals))
}
