use mbdl_inverse::denoise::{pnp_admm, IdentityDenoiser, SoftThresholdDenoiser};
use mbdl_inverse::planted::sparse_vector;
use mbdl_inverse::*;
use mbdl_sim::gaussian::gaussian_matrix;
use mbdl_sim::seeded;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn instance(seed: u64, lambda: f64) -> (LassoProblem, DVector<f64>) {
    let mut rng = seeded(seed);
    let h = gaussian_matrix(8, 16, &mut rng);
    let truth = sparse_vector(16, 2, &mut rng);
    let noise = DVector::from_fn(8, |_, _| {
        let e: f64 = StandardNormal.sample(&mut rng);
        0.01 * e
    });
    let x = &h * &truth + noise;
    (LassoProblem::new(h, x, lambda).unwrap(), truth)
}

#[test]
fn solvers_agree_on_random_instances() {
    let mut worst = (0.0f64, 0.0f64);
    for lambda in [0.01, 0.1, 1.0] {
        for seed in 0..20 {
            let (p, _) = instance(seed, lambda);
            let cd = lasso_coordinate_descent(&p, 1e-15, 200_000);
            let ista = ista_solve(&p, None, 1e-15, 500_000);
            let admm = admm_solve(&p, 1.0, 1e-10, 500_000).unwrap();
            worst.0 = worst.0.max((ista.objective - cd.objective).abs());
            worst.1 = worst.1.max((admm.objective - ista.objective).abs());
        }
    }
    assert!(worst.0 <= 1e-6, "|ISTA - CD| = {}", worst.0);
    assert!(worst.1 <= 1e-5, "|ADMM - ISTA| = {}", worst.1);
}

#[test]
fn small_lambda_recovers_support() {
    for seed in 0..10 {
        let (p, truth) = instance(100 + seed, 0.01);
        let cd = lasso_coordinate_descent(&p, 1e-15, 100_000);
        let mut order: Vec<usize> = (0..16).collect();
        order.sort_by(|&a, &b| cd.coef[b].abs().total_cmp(&cd.coef[a].abs()));
        let mut found = order[..2].to_vec();
        found.sort();
        let support: Vec<usize> = (0..16).filter(|&i| truth[i] != 0.0).collect();
        assert_eq!(found, support, "seed {seed}");
    }
}

#[test]
fn unregularized_admm_solves_square_system() {
    let mut rng = seeded(7);
    for _ in 0..10 {
        let h = gaussian_matrix(6, 6, &mut rng);
        let x = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let p = LassoProblem::new(h.clone(), x.clone(), 0.0).unwrap();
        let r = admm_solve(&p, 1.0, 1e-12, 100_000).unwrap();
        // Least-squares optimum of a full-rank square system has zero residual.
        assert!((&h * &r.coef - &x).norm() <= 1e-8);
    }
}

#[test]
fn dictionary_changes_variables() {
    let (p, _) = instance(3, 0.1);
    let b = DMatrix::from_fn(16, 16, |i, j| if i == j { 2.0 } else { 0.0 });
    let scaled = p.clone().with_dictionary(b).unwrap();
    let plain = lasso_coordinate_descent(&LassoProblem { lambda: 0.05, ..p }, 1e-15, 100_000);
    let coded = lasso_coordinate_descent(&scaled, 1e-15, 100_000);
    // s = 2c turns λ‖c‖₁ into (λ/2)‖s‖₁.
    assert!((scaled.signal(&coded.coef) - plain.coef).amax() < 1e-6);
}

#[test]
fn soft_threshold_pnp_is_admm() {
    for seed in 0..5 {
        let (p, _) = instance(200 + seed, 0.1);
        let alpha = 0.7;
        let (admm, _) = admm_lasso_steps(&p, alpha, None, 60).unwrap();
        let d = SoftThresholdDenoiser {
            threshold: alpha * p.lambda / 2.0,
        };
        let pnp = pnp_admm(&p.x, &p.h, alpha, &d, &[0.0], 60).unwrap();
        assert_eq!(pnp.steps, admm);
    }
}

#[test]
fn identity_pnp_structure() {
    let (p, _) = instance(9, 0.1);
    let r = pnp_admm(&p.x, &p.h, 1.0, &IdentityDenoiser, &[0.1], 10).unwrap();
    assert_eq!(r.steps[0].v, r.steps[0].s);
    for q in 1..r.steps.len() {
        assert_eq!(r.steps[q].v, &r.steps[q].s + &r.steps[q - 1].u);
        // With v = ŝ + u the dual update cancels to zero.
        assert!(r.steps[q].u.iter().all(|v| *v == 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ista_objective_never_rises(seed in any::<u64>(), lambda in 0.0f64..2.0) {
        let (p, _) = instance(seed, lambda);
        let r = ista_solve(&p, None, 0.0, 300);
        let mut prev = p.objective(&DVector::zeros(16));
        for &v in &r.history {
            prop_assert!(v <= prev + 1e-12 * (1.0 + prev.abs()));
            prev = v;
        }
    }

    #[test]
    fn coordinate_descent_returns_best_iterate(seed in any::<u64>(), lambda in 0.0f64..2.0) {
        let (p, _) = instance(seed, lambda);
        let r = lasso_coordinate_descent(&p, 1e-12, 5);
        let best = r.history.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(r.objective <= best);
    }
}
