use mbdl_sim::MarkovSequenceModel;

/// A function node `f(x_i, s̄_i, s̄_{i-1})` of a stationary chain.
pub trait FunctionNode: Send + Sync {
    /// `|S|`.
    fn alphabet(&self) -> usize;
    /// `J`.
    fn memory(&self) -> usize;

    /// `ln f(x, s̄_i, s̄_{i-1})` for `s̄_i` = `prev` shifted by `sym`;
    /// `-∞` where the factor is zero.
    fn log_factor(&self, x: f64, prev: usize, sym: usize) -> f64;

    /// Log-factor tables for a whole sequence, `[T][prev·|S| + sym]`.
    fn log_factor_tables(&self, xs: &[f64]) -> Vec<Vec<f64>> {
        let (m, states) = (self.alphabet(), self.num_states());
        xs.iter()
            .map(|&x| {
                (0..states * m)
                    .map(|t| self.log_factor(x, t / m, t % m))
                    .collect()
            })
            .collect()
    }

    fn num_states(&self) -> usize {
        self.alphabet().pow(self.memory() as u32)
    }

    /// `s̄_{i-1}` shifted by `sym`.
    fn next_state(&self, prev: usize, sym: usize) -> usize {
        (prev * self.alphabet() + sym) % self.num_states()
    }

    /// `f(x, cur, prev)` over arbitrary state pairs; zero unless `cur` is a
    /// one-step shift of `prev`.
    fn evaluate(&self, x: f64, cur: usize, prev: usize) -> f64 {
        let sym = cur % self.alphabet();
        if self.next_state(prev, sym) == cur {
            self.log_factor(x, prev, sym).exp()
        } else {
            0.0
        }
    }
}

/// `f = p(x_i | s_{i-J}, …, s_i) · P(s_i | s̄_{i-1})` from a known model.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticNode {
    model: MarkovSequenceModel,
}

impl AnalyticNode {
    pub fn new(model: MarkovSequenceModel) -> Self {
        Self { model }
    }

    pub fn model(&self) -> &MarkovSequenceModel {
        &self.model
    }
}

impl FunctionNode for AnalyticNode {
    fn alphabet(&self) -> usize {
        self.model.constellation().len()
    }

    fn memory(&self) -> usize {
        self.model.memory()
    }

    fn log_factor(&self, x: f64, prev: usize, sym: usize) -> f64 {
        let mut window = self.model.state_window(prev);
        window.push(sym);
        self.model.log_likelihood(x, &window) + self.model.transitions()[prev][sym].ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mbdl_sim::markov::Emission;
    use mbdl_sim::Constellation;

    #[test]
    fn non_shift_pairs_are_zero() {
        let model = MarkovSequenceModel::uniform(
            2,
            Constellation::bpsk(),
            Emission::GaussianIsi {
                taps: vec![1.0, 0.5, 0.2],
                sigma: 1.0,
            },
        )
        .unwrap();
        let node = AnalyticNode::new(model);
        for prev in 0..4 {
            for cur in 0..4 {
                let v = node.evaluate(0.3, cur, prev);
                let shift = cur / 2 == prev % 2;
                assert_eq!(v > 0.0, shift, "prev {prev} cur {cur}");
            }
        }
    }
}
