use mbdl_smoothing::{run_lorenz_experiment, AugmentConfig, BlackBoxConfig, LorenzExperimentConfig};

use super::{task_err, Outcome, Task};
use crate::metrics::Metric;
use crate::BenchError;

/// Lorenz tracking under a first-order transition: observations, plain
/// smoother, batch MAP under the assumed model, neural-augmented smoother
/// and an equal-size black-box regressor.
pub(crate) fn kalman(task: &Task) -> Result<Outcome, BenchError> {
    let defaults = LorenzExperimentConfig::default();
    let trials = task.config.model.trials.unwrap_or(defaults.test_trajectories);
    let cfg = LorenzExperimentConfig {
        train_steps: task.n_t(),
        test_trajectories: trials,
        iters: task.q(),
        augment: AugmentConfig {
            epochs: task.epochs_or(defaults.augment.epochs),
            ..defaults.augment.clone()
        },
        blackbox: BlackBoxConfig {
            epochs: task.epochs_or(defaults.blackbox.epochs),
            ..defaults.blackbox.clone()
        },
        seed: task.base,
        ..defaults
    };
    let r = run_lorenz_experiment(&cfg).map_err(task_err)?;
    let mut out = Outcome::default();
    for (method, value) in [
        ("observation", r.observation_mse),
        ("smoother", r.smoother_mse),
        ("map-assumed", r.map_mse),
        ("hybrid", r.hybrid_mse),
        ("blackbox", r.blackbox_mse),
    ] {
        out.metrics.push(task.record(method, Metric::Mse, value, trials));
    }
    out.metrics.push(task.record("hybrid", Metric::Params, r.hybrid_params as f64, 1));
    out.metrics.push(task.record("blackbox", Metric::Params, r.blackbox_params as f64, 1));
    Ok(out)
}
