use mbdl_autodiff::Tensor;
use mbdl_inverse::dcea::{objective, poisson_log_likelihood};
use mbdl_inverse::planted::{bump_kernel, conv_sample};
use mbdl_inverse::*;
use mbdl_sim::seeded;
use nalgebra::DVector;

fn planted(seed: u64) -> (Tensor, mbdl_inverse::planted::ConvSample) {
    let k = Tensor::matrix(1, 5, bump_kernel(5));
    let s = conv_sample(&k, 32, 0.1, (0.5, 1.5), &mut seeded(seed));
    (k, s)
}

#[test]
fn alternating_fit_matches_planted_likelihood() {
    for seed in 0..5 {
        let (k, sample) = planted(seed);
        let r = dcea_alternating(&sample.x, &AlternatingConfig::default()).unwrap();
        let ll = poisson_log_likelihood(&sample.x, &r.mean);
        let truth = poisson_log_likelihood(&sample.x, &sample.mean);
        eprintln!("seed {seed}: fitted {ll:.3}, planted {truth:.3}");
        assert!(ll >= truth - 0.01 * truth.abs(), "seed {seed}: {ll} vs {truth}");
        let _ = k;
    }
}

#[test]
fn alternating_objective_never_rises() {
    for seed in 0..5 {
        let (_, sample) = planted(10 + seed);
        let r = dcea_alternating(&sample.x, &AlternatingConfig::default()).unwrap();
        for w in r.objective_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()), "{w:?}");
        }
    }
}

#[test]
fn unfolded_forward_reproduces_alternating_inner_loop() {
    let (_, sample) = planted(3);
    let r = dcea_alternating(&sample.x, &AlternatingConfig::default()).unwrap();
    let params = r.params();
    let out = dcea_forward_from(&params, &sample.x, &r.last_inner.start).unwrap();
    assert_eq!(out.iterates, r.last_inner.iterates);
    assert_eq!(out.code, r.code);
    assert_eq!(out.mean, r.mean);
}

#[test]
fn forward_converges_with_correct_dictionary() {
    for seed in 0..8 {
        let (k, sample) = planted(20 + seed);
        // λ = 8 with b = ηλ.
        let p = DceaParams::shared(k, 32, vec![0.08], 0.01, 500).unwrap();
        let out = dcea_forward(&p, &sample.x).unwrap();
        let last = &out.iterates[499] - &out.iterates[498];
        assert!(last.norm() <= 1e-8, "seed {seed}: step {}", last.norm());
    }
}

#[test]
fn alternating_rejects_non_integer_counts() {
    let x = DVector::from_vec(vec![1.5; 10]);
    assert!(dcea_alternating(&x, &AlternatingConfig::default()).is_err());
}

fn training_pairs(count: usize, seed: u64) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let k = Tensor::matrix(1, 5, bump_kernel(5));
    let mut rng = seeded(seed);
    (0..count)
        .map(|_| {
            let s = conv_sample(&k, 32, 0.1, (0.5, 1.5), &mut rng);
            (s.mean, s.x)
        })
        .unzip()
}

fn mse_set(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(u, v)| mbdl_inverse::mse(u, v)).sum::<f64>() / a.len() as f64
}

#[test]
fn trained_dcea_denoises_better_than_identity() {
    let (clean, noisy) = training_pairs(200, 5);
    for variant in [DceaVariant::C, DceaVariant::UC] {
        let cfg = DceaTrainConfig {
            variant,
            ..Default::default()
        };
        let (params, losses) = dcea_train(&clean, &noisy, &cfg).unwrap();
        let denoised: Vec<_> = noisy.iter().map(|x| dcea_forward(&params, x).unwrap().mean).collect();
        let ours = mse_set(&denoised, &clean);
        let identity = mse_set(&noisy, &clean);
        eprintln!("{variant:?}: dcea {ours:.4}, identity {identity:.4}, loss {:?} -> {:?}", losses.first(), losses.last());
        assert!(ours < identity);
        assert!(params.thresholds.iter().all(|b| *b >= 0.0));
    }
}

#[test]
fn dcea_training_is_deterministic() {
    let (clean, noisy) = training_pairs(40, 6);
    let cfg = DceaTrainConfig {
        epochs: 3,
        ..Default::default()
    };
    let a = dcea_train(&clean, &noisy, &cfg).unwrap();
    let b = dcea_train(&clean, &noisy, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn dcea_is_a_small_fraction_of_dense_baseline() {
    let p = DceaParams::shared(Tensor::zeros(&[4, 7]), 64, vec![0.1; 4], 0.1, 10).unwrap();
    let ratio = p.param_count() as f64 / dense_baseline(64).param_count() as f64;
    assert_eq!(p.param_count(), 4 * 7 + 4);
    assert!(ratio <= 0.10);
}

#[test]
fn zero_code_objective_counts_signal_length() {
    let (k, sample) = planted(8);
    let h = mbdl_autodiff::toeplitz_matrix(&k, 32).to_dmatrix();
    assert_eq!(objective(&h, &DVector::zeros(28), &sample.x, 1.0), 32.0);
}
