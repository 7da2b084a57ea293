//! Seeded forward-model simulators.
//!
//! Every sampler is a pure function of `(model, size, seed)`. Randomness comes
//! from [`rng::seeded`], a ChaCha8 stream keyed by a 64-bit seed, so datasets
//! are identical across runs and platforms.

pub mod constellation;
pub mod dataset;
pub mod error;
pub mod gaussian;
pub mod lorenz;
pub mod markov;
pub mod poisson;
pub mod rng;
pub mod state_space;

pub use constellation::Constellation;
pub use error::SimError;
pub use gaussian::{GaussianMimoChannel, LabeledSet};
pub use lorenz::{LorenzSystem, LorenzTrajectory};
pub use markov::{Emission, MarkovSample, MarkovSequenceModel};
pub use poisson::{poisson_draw, poisson_log_pmf, PoissonChannel};
pub use rng::{derive_seed, seeded};
pub use state_space::{StateSpaceModel, Trajectory, Transitions};

/// Noise standard deviation for unit-power symbols: `SNR(dB) = 10 log10(1/σ²)`.
pub fn noise_std_from_snr_db(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 20.0)
}

/// Linear SNR `ρ = 10^(SNR/10)`, used as the Poisson signal strength.
pub fn rho_from_snr_db(snr_db: f64) -> f64 {
    10f64.powf(snr_db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snr_conversions() {
        assert!((noise_std_from_snr_db(0.0) - 1.0).abs() < 1e-15);
        assert!((noise_std_from_snr_db(20.0) - 0.1).abs() < 1e-15);
        assert!((rho_from_snr_db(10.0) - 10.0).abs() < 1e-12);
    }
}
