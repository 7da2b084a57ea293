use mbdl_sim::{seeded, StateSpaceModel, Transitions};
use mbdl_smoothing::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn spd(d: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-0.5..0.5));
    &a * a.transpose() + DMatrix::identity(d, d) * 0.5
}

fn random_model(ds: usize, dx: usize, s0_zero: bool, seed: u64) -> StateSpaceModel {
    let mut rng = seeded(seed);
    let f = DMatrix::identity(ds, ds) * 0.8 + DMatrix::from_fn(ds, ds, |_, _| rng.random_range(-0.15..0.15));
    let h = DMatrix::from_fn(dx, ds, |_, _| rng.random_range(-1.0..1.0));
    let w = spd(ds, &mut rng);
    let r = spd(dx, &mut rng);
    let s0 = if s0_zero {
        DVector::zeros(ds)
    } else {
        DVector::from_fn(ds, |_, _| rng.random_range(-2.0..2.0))
    };
    StateSpaceModel::new(Transitions::Constant(f), h, w, r, s0).unwrap()
}

fn max_diff(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).amax()).fold(0.0, f64::max)
}

#[test]
fn gradient_smoother_matches_batch_map() {
    for seed in 0..3 {
        let model = random_model(3, 2, false, seed);
        let x = model.sample(50, seed + 100).unwrap().x;
        let l = lipschitz_bound(&model, 50, 500).unwrap();
        let cfg = SmootherConfig {
            eta: 0.9 / l,
            iters: 5000,
            max_halvings: 0,
            ..Default::default()
        };
        let got = gradient_smoother(&x, &model, &cfg).unwrap().trajectory;
        let want = batch_map_oracle(&x, &model).unwrap();
        let err = max_diff(&got, &want);
        assert!(err <= 1e-4, "seed {seed}: max deviation {err}");
    }
}

#[test]
fn identity_model_converges_to_quadratic_minimizer() {
    let i = DMatrix::identity(2, 2);
    let model = StateSpaceModel::new(Transitions::Constant(i.clone()), i.clone(), i.clone(), i, DVector::zeros(2)).unwrap();
    let x = model.sample(30, 5).unwrap().x;
    let cfg = SmootherConfig {
        eta: 0.1,
        iters: 1000,
        ..Default::default()
    };
    let got = gradient_smoother(&x, &model, &cfg).unwrap().trajectory;
    // Minimizer of Σ‖x_t − s_t‖² + ‖s_t − s_{t−1}‖² per coordinate:
    // tridiagonal system solved by the Thomas algorithm.
    let n = x.len();
    for c in 0..2 {
        let diag: Vec<f64> = (0..n).map(|t| if t + 1 < n { 3.0 } else { 2.0 }).collect();
        let (mut cp, mut dp) = (vec![0.0; n], vec![0.0; n]);
        cp[0] = -1.0 / diag[0];
        dp[0] = x[0][c] / diag[0];
        for t in 1..n {
            let m = diag[t] + cp[t - 1];
            cp[t] = -1.0 / m;
            dp[t] = (x[t][c] + dp[t - 1]) / m;
        }
        let mut sol = vec![0.0; n];
        sol[n - 1] = dp[n - 1];
        for t in (0..n - 1).rev() {
            sol[t] = dp[t] - cp[t] * sol[t + 1];
        }
        for t in 0..n {
            assert!((got[t][c] - sol[t]).abs() <= 1e-4, "t={t}: {} vs {}", got[t][c], sol[t]);
        }
    }
}

#[test]
fn tiny_observation_noise_tracks_observations() {
    let mut rng = seeded(9);
    let model = StateSpaceModel::new(
        Transitions::Constant(DMatrix::identity(3, 3) * 0.9),
        DMatrix::identity(3, 3),
        spd(3, &mut rng),
        DMatrix::identity(3, 3) * 1e-10,
        DVector::zeros(3),
    )
    .unwrap();
    let x: Vec<_> = (0..20).map(|_| DVector::from_fn(3, |_, _| rng.random_range(-3.0..3.0))).collect();
    let s = batch_map_oracle(&x, &model).unwrap();
    assert!(max_diff(&s, &x) <= 1e-4);
}

#[test]
fn batch_map_is_a_stationary_point() {
    let model = random_model(3, 2, false, 4);
    let x = model.sample(40, 8).unwrap().x;
    let s = batch_map_oracle(&x, &model).unwrap();
    let m = kalman_messages(&s, &x, &model).unwrap();
    let norm = (0..40).map(|t| m.sum(t).norm_squared()).sum::<f64>().sqrt();
    assert!(norm <= 1e-10, "residual gradient {norm}");
    let next = smoother_step(&s, &x, &model, 0.05).unwrap();
    assert!(max_diff(&next, &s) <= 1e-9);
}

#[test]
fn messages_are_the_log_joint_gradient() {
    let model = random_model(3, 2, false, 12);
    let tr = model.sample(6, 13).unwrap();
    let mut rng = seeded(14);
    let s: Vec<_> = tr.s.iter().map(|v| v.map(|e| e + rng.random_range(-0.5..0.5))).collect();
    let m = kalman_messages(&s, &tr.x, &model).unwrap();
    let h = 1e-5;
    for t in 0..s.len() {
        let g = m.sum(t);
        let mut fd = DVector::zeros(3);
        for i in 0..3 {
            let mut up = s.clone();
            up[t][i] += h;
            let mut dn = s.clone();
            dn[t][i] -= h;
            fd[i] = (log_joint(&up, &tr.x, &model).unwrap() - log_joint(&dn, &tr.x, &model).unwrap()) / (2.0 * h);
        }
        let rel = (&g - &fd).norm() / g.norm().max(1e-12);
        assert!(rel <= 1e-6, "t={t}: relative error {rel}");
    }
}

#[test]
fn small_steps_never_decrease_the_log_joint() {
    let model = random_model(3, 2, false, 21);
    let x = model.sample(50, 22).unwrap().x;
    let eta = 0.99 / lipschitz_bound(&model, 50, 500).unwrap();
    let mut s = initial_guess(&x, &model, InitialGuess::Zeros);
    let mut prev = log_joint(&s, &x, &model).unwrap();
    for q in 0..300 {
        s = smoother_step(&s, &x, &model, eta).unwrap();
        let now = log_joint(&s, &x, &model).unwrap();
        assert!(now >= prev - 1e-9 * prev.abs(), "iteration {q}: {prev} -> {now}");
        prev = now;
    }
}

#[test]
fn divergence_reports_step_size() {
    let model = random_model(3, 2, false, 2);
    let x = model.sample(20, 3).unwrap().x;
    let l = lipschitz_bound(&model, 20, 300).unwrap();
    let cfg = SmootherConfig {
        eta: 10.0 / l,
        iters: 2000,
        max_halvings: 0,
        ..Default::default()
    };
    match gradient_smoother(&x, &model, &cfg) {
        Err(SmoothingError::Diverged { eta, .. }) => assert_eq!(eta, 10.0 / l),
        other => panic!("expected divergence, got {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn messages_scale_with_state_and_observation(seed in any::<u64>(), t in 1usize..8) {
        let model = random_model(3, 2, true, seed);
        let tr = model.sample(t, seed ^ 7).unwrap();
        let twice = |v: &[DVector<f64>]| v.iter().map(|e| e * 2.0).collect::<Vec<_>>();
        let a = kalman_messages(&tr.s, &tr.x, &model).unwrap();
        let b = kalman_messages(&twice(&tr.s), &twice(&tr.x), &model).unwrap();
        for i in 0..t {
            prop_assert!((&b.from_past[i] - &a.from_past[i] * 2.0).amax() <= 1e-12 * (1.0 + a.from_past[i].amax()));
            prop_assert!((&b.from_future[i] - &a.from_future[i] * 2.0).amax() <= 1e-12 * (1.0 + a.from_future[i].amax()));
            prop_assert!((&b.from_obs[i] - &a.from_obs[i] * 2.0).amax() <= 1e-12 * (1.0 + a.from_obs[i].amax()));
        }
    }
}
