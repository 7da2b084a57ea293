//! Smoothing in linear Gaussian state-space models by gradient message
//! passing, an exact batch MAP solver, and a learned correction of the
//! messages for mismatched models.

pub mod augment;
pub mod blackbox;
pub mod error;
pub mod lorenz;
pub mod messages;
pub mod smoother;

pub use augment::{
    neural_augmented_smoother, train_augmentation, unrolled_loss_graph, AugmentConfig, AugmentationNet, LabeledTrajectory,
};
pub use blackbox::{BlackBoxConfig, BlackBoxRegressor};
pub use error::SmoothingError;
pub use lorenz::{run_lorenz_experiment, LorenzExperimentConfig, LorenzReport};
pub use messages::{kalman_messages, log_joint, KalmanMessages};
pub use smoother::{
    batch_map_oracle, gradient_smoother, initial_guess, lipschitz_bound, smoother_step, InitialGuess, SmootherConfig,
    SmootherOutput,
};

use nalgebra::DVector;

/// Mean squared error per coordinate over a trajectory.
pub fn trajectory_mse(estimate: &[DVector<f64>], truth: &[DVector<f64>]) -> f64 {
    let n: usize = truth.iter().map(|v| v.len()).sum();
    estimate.iter().zip(truth).map(|(a, b)| (a - b).norm_squared()).sum::<f64>() / n as f64
}
