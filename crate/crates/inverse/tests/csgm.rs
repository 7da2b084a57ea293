use mbdl_inverse::planted::{subspace_basis, subspace_signal};
use mbdl_inverse::*;
use mbdl_sim::gaussian::gaussian_matrix;
use mbdl_sim::seeded;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// `(BᵀHᵀHB + λI)⁻¹ BᵀHᵀ x`.
fn closed_form(b: &DMatrix<f64>, h: &DMatrix<f64>, x: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let a = h * b;
    let l = b.ncols();
    let lhs = a.transpose() * &a + DMatrix::identity(l, l) * lambda;
    lhs.cholesky().unwrap().solve(&(a.transpose() * x))
}

#[test]
fn linear_generator_matches_closed_form() {
    let mut rng = seeded(1);
    for trial in 0..10 {
        let b = subspace_basis(16, 4, &mut rng);
        let h = gaussian_matrix(8, 16, &mut rng);
        let x = DVector::from_fn(8, |_, _| rng.random_range(-1.0..1.0));
        let prior = GeneratorPrior::linear(&b);
        let r = csgm_recover(&prior, &x, &h, 0.1, 2, 5000, trial).unwrap();
        let z = closed_form(&b, &h, &x, 0.1);
        assert!((&r.z - &z).amax() <= 1e-4, "trial {trial}: {}", (&r.z - &z).amax());
    }
}

#[test]
fn huge_regularizer_pins_latent_to_zero() {
    let mut rng = seeded(2);
    let b = subspace_basis(12, 3, &mut rng);
    let prior = GeneratorPrior::linear(&b);
    let h = gaussian_matrix(6, 12, &mut rng);
    let x = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
    let r = csgm_recover(&prior, &x, &h, 1e9, 3, 200, 0).unwrap();
    assert!(r.z.amax() < 1e-6);
    assert!((&r.signal - prior.generate(&DVector::zeros(3))).amax() < 1e-6);
}

#[test]
fn latent_loss_never_rises() {
    let mut rng = seeded(3);
    let signals: Vec<_> = (0..200).map(|_| DVector::from_fn(10, |_, _| rng.random_range(-1.0..1.0))).collect();
    let cfg = GeneratorConfig {
        hidden: vec![16],
        epochs: 20,
        ..Default::default()
    };
    let (prior, _) = pretrain_generator(&signals, 3, &cfg).unwrap();
    let h = gaussian_matrix(5, 10, &mut rng);
    let r = csgm_recover(&prior, &signals[0].rows(0, 5).into_owned(), &h, 0.01, 3, 300, 9).unwrap();
    for w in r.history.windows(2) {
        assert!(w[1] <= w[0]);
    }
}

fn subspace_data(n: usize, l: usize, count: usize, seed: u64) -> (DMatrix<f64>, Vec<DVector<f64>>) {
    let mut rng = seeded(seed);
    let b = subspace_basis(n, l, &mut rng);
    let signals = (0..count).map(|_| subspace_signal(&b, &mut rng)).collect();
    (b, signals)
}

#[test]
fn linear_autoencoder_learns_subspace() {
    let (_, signals) = subspace_data(16, 4, 500, 4);
    let (prior, report) = pretrain_generator(&signals, 4, &GeneratorConfig::default()).unwrap();
    assert!(report.reconstruction_mse <= 1e-4, "MSE {}", report.reconstruction_mse);
    assert_eq!(prior.generate(&DVector::from_element(4, 0.3)).len(), 16);
}

#[test]
fn wider_latent_reconstructs_better() {
    let mut rng = seeded(5);
    let signals: Vec<_> = (0..300).map(|_| DVector::from_fn(8, |_, _| rng.random_range(-1.0..1.0))).collect();
    let cfg = GeneratorConfig {
        epochs: 100,
        ..Default::default()
    };
    let (_, narrow) = pretrain_generator(&signals, 1, &cfg).unwrap();
    let (_, wide) = pretrain_generator(&signals, 7, &cfg).unwrap();
    assert!(wide.reconstruction_mse < narrow.reconstruction_mse);
}

#[test]
fn noiseless_in_range_recovery_is_at_least_as_good_as_pretraining() {
    let (_, signals) = subspace_data(16, 4, 500, 6);
    let (prior, report) = pretrain_generator(&signals, 4, &GeneratorConfig::default()).unwrap();
    let mut rng = seeded(7);
    let h = DMatrix::identity(16, 16);
    for t in 0..5 {
        let z = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let x = prior.generate(&z);
        let r = csgm_recover(&prior, &x, &h, 0.0, 2, 3000, t).unwrap();
        assert!(mse(&r.signal, &x) <= report.reconstruction_mse + 1e-6);
    }
}

#[test]
fn generative_prior_beats_lasso_with_few_measurements() {
    let (n, m) = (64, 8);
    let (_, signals) = subspace_data(n, 4, 1020, 8);
    let (train, test) = signals.split_at(1000);
    let (prior, _) = pretrain_generator(train, 4, &GeneratorConfig::default()).unwrap();
    let mut rng = seeded(9);
    let mut wins = 0;
    for (t, s) in test.iter().enumerate() {
        let h = gaussian_matrix(m, n, &mut rng);
        let x = &h * s;
        let g = csgm_recover(&prior, &x, &h, 1e-3, 3, 2000, t as u64).unwrap();
        let lasso = lasso_coordinate_descent(&LassoProblem::new(h, x, 0.01).unwrap(), 1e-12, 10_000);
        let (eg, el) = (mse(&g.signal, s), mse(&lasso.coef, s));
        wins += usize::from(eg < el);
    }
    assert!(wins > 10, "CSGM won {wins}/20");
}
