//! Model-free baseline: a per-index MLP from a window of observations to
//! the state.

use mbdl_autodiff::{bindings, fit, Activation, FitConfig, Graph, Mlp, Optimizer, OptimizerConfig, Params, Tensor};
use mbdl_sim::seeded;
use nalgebra::DVector;

use crate::augment::LabeledTrajectory;
use crate::error::SmoothingError;

#[derive(Debug, Clone, PartialEq)]
pub struct BlackBoxConfig {
    /// Observations on each side of `t`; edges repeat the end observation.
    pub window: usize,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl Default for BlackBoxConfig {
    fn default() -> Self {
        Self {
            window: 2,
            hidden: vec![32, 32],
            epochs: 200,
            batch_size: 32,
            optimizer: OptimizerConfig::adam(2e-3),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlackBoxRegressor {
    mlp: Mlp,
    params: Params,
    window: usize,
    in_mean: Vec<f64>,
    in_std: Vec<f64>,
    out_mean: Vec<f64>,
    out_std: Vec<f64>,
}

fn windows(x: &[DVector<f64>], w: usize) -> Vec<Vec<f64>> {
    let last = x.len() as isize - 1;
    (0..x.len() as isize)
        .map(|t| {
            (t - w as isize..=t + w as isize)
                .flat_map(|k| x[k.clamp(0, last) as usize].iter().copied())
                .collect()
        })
        .collect()
}

fn moments(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let cols = rows[0].len();
    let mean: Vec<f64> = (0..cols).map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / n).collect();
    let std = (0..cols)
        .map(|c| {
            let v = rows.iter().map(|r| (r[c] - mean[c]).powi(2)).sum::<f64>() / n;
            if v > 0.0 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

fn standardized(rows: &[Vec<f64>], mean: &[f64], std: &[f64]) -> Tensor {
    let cols = mean.len();
    Tensor::matrix(
        rows.len(),
        cols,
        rows.iter()
            .flat_map(|r| r.iter().enumerate().map(|(c, v)| (v - mean[c]) / std[c]))
            .collect(),
    )
}

impl BlackBoxRegressor {
    pub fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        sizes
    }

    /// MSE training on standardized inputs and targets.
    pub fn train(data: &[LabeledTrajectory], config: &BlackBoxConfig) -> Result<(Self, Vec<f64>), SmoothingError> {
        let first = data.first().ok_or(SmoothingError::Empty)?;
        let (d, dx) = (first.s[0].len(), first.x[0].len());
        let inputs: Vec<Vec<f64>> = data.iter().flat_map(|t| windows(&t.x, config.window)).collect();
        let targets: Vec<Vec<f64>> = data.iter().flat_map(|t| t.s.iter().map(|v| v.iter().copied().collect())).collect();
        let (in_mean, in_std) = moments(&inputs);
        let (out_mean, out_std) = moments(&targets);
        let mlp = Mlp::new(
            "blackbox",
            &Self::sizes((2 * config.window + 1) * dx, &config.hidden, d),
            Activation::Tanh,
            Activation::Identity,
        );
        let mut rng = seeded(config.seed);
        let init = mlp.init_params(&mut rng);
        let mut g = Graph::new();
        let xi = g.input("x");
        let yi = g.input("y");
        let out = mlp.build(&mut g, xi, &init);
        let loss = g.mse(out, yi);
        g.set_output(loss);
        let b = bindings([
            ("x", standardized(&inputs, &in_mean, &in_std)),
            ("y", standardized(&targets, &out_mean, &out_std)),
        ]);
        let mut opt = Optimizer::new(config.optimizer);
        let cfg = FitConfig {
            epochs: config.epochs,
            batch_size: config.batch_size,
        };
        let losses = fit(&mut g, &b, cfg, &mut opt, &mut rng)?;
        Ok((
            Self {
                mlp,
                params: g.params().clone(),
                window: config.window,
                in_mean,
                in_std,
                out_mean,
                out_std,
            },
            losses,
        ))
    }

    pub fn param_count(&self) -> usize {
        self.mlp.param_count()
    }

    pub fn predict(&self, x: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let inputs = standardized(&windows(x, self.window), &self.in_mean, &self.in_std);
        let out = self.mlp.forward(&self.params, &inputs);
        out.data()
            .chunks(out.cols())
            .map(|r| DVector::from_iterator(r.len(), r.iter().enumerate().map(|(c, v)| v * self.out_std[c] + self.out_mean[c])))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_repeat_edges() {
        let x: Vec<_> = (0..3).map(|t| DVector::from_element(1, t as f64)).collect();
        assert_eq!(windows(&x, 1), vec![vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 2.0], vec![1.0, 2.0, 2.0]]);
    }
}
