//! Empirical transition and tuple tables with add-one smoothing.

use crate::error::FgError;

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionHistogram {
    alphabet: usize,
    memory: usize,
    /// `P̂(s_i | s̄_{i-1})`, one row per state.
    pub transitions: Vec<Vec<f64>>,
    /// `P̂(s_{i-J}, …, s_i)` indexed by `prev · |S| + sym`.
    pub tuple_marginal: Vec<f64>,
    pub warnings: Vec<String>,
}

impl TransitionHistogram {
    /// Tables given directly; rows and the marginal must be distributions.
    pub fn from_tables(
        alphabet: usize,
        memory: usize,
        transitions: Vec<Vec<f64>>,
        tuple_marginal: Vec<f64>,
    ) -> Result<Self, FgError> {
        let states = alphabet.pow(memory as u32);
        let rows_ok = transitions.len() == states
            && transitions
                .iter()
                .all(|r| r.len() == alphabet && (r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let marg_ok = tuple_marginal.len() == states * alphabet && (tuple_marginal.iter().sum::<f64>() - 1.0).abs() < 1e-9;
        if !rows_ok || !marg_ok {
            return Err(FgError::InvalidConfig("tables are not distributions of the right size".into()));
        }
        Ok(Self {
            alphabet,
            memory,
            transitions,
            tuple_marginal,
            warnings: Vec::new(),
        })
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    /// `kind,row,symbol,probability` lines for both tables.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,row,symbol,probability\n");
        for (r, row) in self.transitions.iter().enumerate() {
            for (s, p) in row.iter().enumerate() {
                out.push_str(&format!("transition,{r},{s},{p:e}\n"));
            }
        }
        for (i, p) in self.tuple_marginal.iter().enumerate() {
            out.push_str(&format!("tuple,{},{},{p:e}\n", i / self.alphabet, i % self.alphabet));
        }
        out
    }

    /// Inverse of [`TransitionHistogram::to_csv`].
    pub fn from_csv(csv: &str, alphabet: usize, memory: usize) -> Result<Self, FgError> {
        let states = alphabet.pow(memory as u32);
        let mut transitions = vec![vec![f64::NAN; alphabet]; states];
        let mut tuple_marginal = vec![f64::NAN; states * alphabet];
        for (n, line) in csv.lines().enumerate().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || FgError::Csv(format!("line {}: {line}", n + 1));
            if f.len() != 4 {
                return Err(bad());
            }
            let row: usize = f[1].parse().map_err(|_| bad())?;
            let sym: usize = f[2].parse().map_err(|_| bad())?;
            let p: f64 = f[3].parse().map_err(|_| bad())?;
            if row >= states || sym >= alphabet {
                return Err(bad());
            }
            match f[0] {
                "transition" => transitions[row][sym] = p,
                "tuple" => tuple_marginal[row * alphabet + sym] = p,
                _ => return Err(bad()),
            }
        }
        Self::from_tables(alphabet, memory, transitions, tuple_marginal)
    }
}

/// Counts `(J+1)`-tuples inside each label sequence and normalizes with
/// add-one smoothing. Warns when there are fewer tuples than table cells.
pub fn learn_transition_histogram(
    sequences: &[Vec<usize>],
    alphabet: usize,
    memory: usize,
) -> Result<TransitionHistogram, FgError> {
    if alphabet == 0 || memory == 0 {
        return Err(FgError::InvalidConfig("need |S| ≥ 1 and J ≥ 1".into()));
    }
    let states = alphabet.pow(memory as u32);
    let mut counts = vec![0u64; states * alphabet];
    let mut total = 0u64;
    for seq in sequences {
        if let Some(&bad) = seq.iter().find(|&&s| s >= alphabet) {
            return Err(FgError::InvalidConfig(format!("symbol {bad} outside alphabet of {alphabet}")));
        }
        for w in seq.windows(memory + 1) {
            let idx = w.iter().fold(0, |acc, &s| acc * alphabet + s);
            counts[idx] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(FgError::EmptyInput);
    }
    let mut warnings = Vec::new();
    if (total as usize) < states * alphabet {
        warnings.push(format!("{total} tuples for {} table cells", states * alphabet));
    }
    let transitions = (0..states)
        .map(|prev| {
            let row = &counts[prev * alphabet..(prev + 1) * alphabet];
            let denom = row.iter().sum::<u64>() as f64 + alphabet as f64;
            row.iter().map(|&c| (c as f64 + 1.0) / denom).collect()
        })
        .collect();
    let denom = total as f64 + (states * alphabet) as f64;
    let tuple_marginal = counts.iter().map(|&c| (c as f64 + 1.0) / denom).collect();
    Ok(TransitionHistogram {
        alphabet,
        memory,
        transitions,
        tuple_marginal,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sequence_concentrates_on_self() {
        let h = learn_transition_histogram(&[vec![1; 101]], 2, 1).unwrap();
        assert_eq!(h.transitions[1], vec![1.0 / 102.0, 101.0 / 102.0]);
        // Unvisited row falls back to uniform.
        assert_eq!(h.transitions[0], vec![0.5, 0.5]);
    }

    #[test]
    fn smoothing_keeps_entries_positive() {
        let h = learn_transition_histogram(&[vec![0, 1, 0, 1]], 2, 2).unwrap();
        assert!(h.transitions.iter().flatten().all(|&p| p > 0.0));
        assert!(h.tuple_marginal.iter().all(|&p| p > 0.0));
        for r in &h.transitions {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
        assert_eq!(h.warnings.len(), 1);
    }

    #[test]
    fn empty_input_fails() {
        assert!(matches!(learn_transition_histogram(&[vec![0]], 2, 1), Err(FgError::EmptyInput)));
    }

    #[test]
    fn csv_lists_every_cell() {
        let h = learn_transition_histogram(&[vec![0, 1, 1, 0]], 2, 1).unwrap();
        assert_eq!(h.to_csv().lines().count(), 1 + 4 + 4);
        assert_eq!(TransitionHistogram::from_csv(&h.to_csv(), 2, 1).unwrap(), TransitionHistogram {
            warnings: Vec::new(),
            ..h
        });
    }
}
