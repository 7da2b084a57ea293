//! Sparse recovery and restoration of 1-D signals.
//!
//! * [`lasso`]: coordinate descent, ISTA and ADMM on
//!   `‖x − H B c‖² + λ‖c‖₁`, with a generic ADMM core shared by
//!   plug-and-play.
//! * [`dcea`]: alternating convolutional dictionary learning under Poisson
//!   noise and its unfolded autoencoder.
//! * [`csgm`]: compressed sensing over the latent space of a pre-trained
//!   decoder.
//! * [`denoise`]: denoisers for plug-and-play ADMM.
//! * [`planted`]: synthetic signal families used by tests and experiments.

pub mod csgm;
pub mod dcea;
pub mod denoise;
pub mod error;
pub mod lasso;
pub mod planted;

pub use csgm::{csgm_recover, pretrain_generator, CsgmResult, GeneratorConfig, GeneratorPrior, PretrainReport};
pub use dcea::{
    dcea_alternating, dcea_forward, dcea_forward_from, dcea_train, dense_baseline, AlternatingConfig, AlternatingResult,
    DceaOutput, DceaParams, DceaTrainConfig, DceaVariant,
};
pub use denoise::{
    pnp_admm, train_denoiser, Denoiser, DenoiserTrainConfig, IdentityDenoiser, LearnedDenoiser, SoftThresholdDenoiser,
};
pub use error::InverseError;
pub use lasso::{
    admm_core, admm_lasso_steps, admm_solve, ista_solve, lasso_coordinate_descent, spectral_norm_sq, AdmmStep,
    LassoProblem, SolveResult,
};

pub use mbdl_autodiff::soft_threshold;
use nalgebra::DVector;

pub fn soft_threshold_vec(v: &DVector<f64>, threshold: f64) -> DVector<f64> {
    v.map(|x| soft_threshold(x, threshold))
}

/// Mean squared error per element.
pub fn mse(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm_squared() / a.len() as f64
}
