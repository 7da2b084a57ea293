//! Smoothing a Lorenz trajectory with a Taylor-linearized model: plain
//! smoother, augmented smoother and a black-box regressor side by side.

use mbdl_sim::{derive_seed, LorenzSystem};
use nalgebra::DMatrix;

use crate::augment::{neural_augmented_smoother, train_augmentation, AugmentConfig, LabeledTrajectory};
use crate::blackbox::{BlackBoxConfig, BlackBoxRegressor};
use crate::error::SmoothingError;
use crate::smoother::{batch_map_oracle, gradient_smoother, lipschitz_bound, SmootherConfig};
use crate::trajectory_mse;

#[derive(Debug, Clone, PartialEq)]
pub struct LorenzExperimentConfig {
    pub system: LorenzSystem,
    /// Taylor order of the assumed transition.
    pub order: usize,
    /// Assumed process noise variance, `W = w · I`.
    pub assumed_process_var: f64,
    pub traj_len: usize,
    /// Labelled time steps for training, split into trajectories of
    /// `traj_len`.
    pub train_steps: usize,
    pub test_trajectories: usize,
    /// Step size; `None` uses `0.9 / L` from the first training trajectory.
    pub eta: Option<f64>,
    pub iters: usize,
    pub augment: AugmentConfig,
    pub blackbox: BlackBoxConfig,
    pub seed: u64,
}

impl Default for LorenzExperimentConfig {
    fn default() -> Self {
        Self {
            system: LorenzSystem::default(),
            order: 1,
            assumed_process_var: 0.05,
            traj_len: 50,
            train_steps: 2000,
            test_trajectories: 20,
            eta: None,
            iters: 20,
            augment: AugmentConfig {
                epochs: 30,
                ..AugmentConfig::default()
            },
            blackbox: BlackBoxConfig::default(),
            seed: 0,
        }
    }
}

/// Held-out per-coordinate MSEs.
#[derive(Debug, Clone, PartialEq)]
pub struct LorenzReport {
    pub observation_mse: f64,
    pub smoother_mse: f64,
    pub map_mse: f64,
    pub hybrid_mse: f64,
    pub blackbox_mse: f64,
    pub eta: f64,
    pub hybrid_params: usize,
    pub blackbox_params: usize,
}

pub fn lorenz_trajectories(
    config: &LorenzExperimentConfig,
    count: usize,
    stream: u64,
) -> Result<Vec<LabeledTrajectory>, SmoothingError> {
    let w = DMatrix::identity(3, 3) * config.assumed_process_var;
    (0..count)
        .map(|i| {
            let tr = config
                .system
                .simulate(config.traj_len, derive_seed(derive_seed(config.seed, stream), i as u64))?;
            let model = config.system.assumed_model(config.order, &tr, w.clone())?;
            Ok(LabeledTrajectory { model, s: tr.s, x: tr.x })
        })
        .collect()
}

pub fn run_lorenz_experiment(config: &LorenzExperimentConfig) -> Result<LorenzReport, SmoothingError> {
    let n_train = (config.train_steps / config.traj_len).max(1);
    let train = lorenz_trajectories(config, n_train, 0)?;
    let test = lorenz_trajectories(config, config.test_trajectories, 1)?;
    let eta = match config.eta {
        Some(e) => e,
        None => 0.9 / lipschitz_bound(&train[0].model, config.traj_len, 200)?,
    };
    let smoother = SmootherConfig {
        eta,
        iters: config.iters,
        max_halvings: 0,
        ..config.augment.smoother
    };
    let aug_cfg = AugmentConfig {
        smoother,
        ..config.augment.clone()
    };
    let (net, _) = train_augmentation(&train, &aug_cfg)?;
    let bb_cfg = BlackBoxConfig {
        hidden: config.augment.hidden.clone(),
        ..config.blackbox.clone()
    };
    let (bb, _) = BlackBoxRegressor::train(&train, &bb_cfg)?;

    let mean = |f: &dyn Fn(&LabeledTrajectory) -> Result<f64, SmoothingError>| -> Result<f64, SmoothingError> {
        let mut total = 0.0;
        for tr in &test {
            total += f(tr)?;
        }
        Ok(total / test.len() as f64)
    };
    Ok(LorenzReport {
        observation_mse: mean(&|tr| Ok(trajectory_mse(&tr.x, &tr.s)))?,
        smoother_mse: mean(&|tr| Ok(trajectory_mse(&gradient_smoother(&tr.x, &tr.model, &smoother)?.trajectory, &tr.s)))?,
        map_mse: mean(&|tr| Ok(trajectory_mse(&batch_map_oracle(&tr.x, &tr.model)?, &tr.s)))?,
        hybrid_mse: mean(&|tr| {
            let out = neural_augmented_smoother(&tr.x, &tr.model, &net, &smoother)?;
            Ok(trajectory_mse(out.last().expect("Q ≥ 1"), &tr.s))
        })?,
        blackbox_mse: mean(&|tr| Ok(trajectory_mse(&bb.predict(&tr.x), &tr.s)))?,
        eta,
        hybrid_params: net.param_count(),
        blackbox_params: bb.param_count(),
    })
}
