use mbdl_inverse::planted::smooth_signal;
use mbdl_inverse::*;
use mbdl_sim::gaussian::gaussian_matrix;
use mbdl_sim::seeded;
use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};

const LEVELS: [f64; 4] = [0.05, 0.1, 0.2, 0.4];

fn corpus(count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = seeded(seed);
    (0..count).map(|_| smooth_signal(32, &mut rng)).collect()
}

fn noisy(s: &DVector<f64>, sigma: f64, rng: &mut impl rand::Rng) -> DVector<f64> {
    s.map(|v| {
        let e: f64 = StandardNormal.sample(rng);
        v + sigma * e
    })
}

fn trained() -> (LearnedDenoiser, Vec<f64>) {
    train_denoiser(&corpus(400, 1), &LEVELS, &DenoiserTrainConfig::default()).unwrap()
}

#[test]
fn learned_denoiser_beats_identity() {
    let (d, _) = trained();
    let mut rng = seeded(2);
    let (mut ours, mut ident) = (0.0, 0.0);
    for s in corpus(100, 3) {
        let v = noisy(&s, 0.2, &mut rng);
        ours += mse(&d.denoise(&v, 0.2), &s);
        ident += mse(&v, &s);
    }
    assert!(ours < ident, "denoiser {ours}, identity {ident}");
}

#[test]
fn clean_inputs_stay_within_training_floor() {
    let clean = corpus(400, 1);
    let (d, losses) = train_denoiser(&clean, &[0.0, 0.1, 0.2], &DenoiserTrainConfig::default()).unwrap();
    // Training loss sums the squared error over a signal.
    let floor = losses.last().unwrap();
    let err: f64 = clean.iter().map(|s| (d.denoise(s, 0.0) - s).norm_squared()).sum::<f64>() / clean.len() as f64;
    assert!(err <= *floor, "σ = 0 error {err}, floor {floor}");
}

#[test]
fn denoiser_training_is_deterministic() {
    let cfg = DenoiserTrainConfig {
        epochs: 2,
        ..Default::default()
    };
    let a = train_denoiser(&corpus(50, 4), &LEVELS, &cfg).unwrap();
    let b = train_denoiser(&corpus(50, 4), &LEVELS, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn learned_pnp_beats_l1_admm_on_smooth_signals() {
    let (d, _) = trained();
    let mut rng = seeded(5);
    let iters = 30;
    let (mut pnp_total, mut admm_total) = (0.0, 0.0);
    for s in corpus(30, 6) {
        let h = gaussian_matrix(24, 32, &mut rng);
        let x = noisy(&(&h * &s), 0.05, &mut rng);
        let pnp = pnp_admm(&x, &h, 1.0, &d, &[0.1], iters).unwrap();
        let p = LassoProblem::new(h, x, 0.1).unwrap();
        let (steps, _) = admm_lasso_steps(&p, 1.0, None, iters).unwrap();
        pnp_total += mse(&pnp.estimate, &s);
        admm_total += mse(&steps.last().unwrap().s, &s);
    }
    assert!(pnp_total < admm_total, "PnP {pnp_total}, ℓ1 ADMM {admm_total}");
}
