use std::sync::Arc;

use mbdl_detection::deepsic::UniformBlock;
use mbdl_detection::*;
use mbdl_sim::gaussian::{exponential_decay_matrix, gaussian_matrix};
use mbdl_sim::{seeded, Constellation, GaussianMimoChannel};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Independent brute force: walks candidates in lexicographic order by
/// recursion and keeps the first strict minimum.
fn brute_force(x: &DVector<f64>, h: &DMatrix<f64>) -> Vec<usize> {
    fn walk(
        prefix: &mut Vec<usize>,
        k: usize,
        x: &DVector<f64>,
        h: &DMatrix<f64>,
        best: &mut (f64, Vec<usize>),
    ) {
        if prefix.len() == k {
            let s = DVector::from_iterator(k, prefix.iter().map(|&i| if i == 0 { -1.0 } else { 1.0 }));
            let d = (x - h * s).norm_squared();
            if d < best.0 {
                *best = (d, prefix.clone());
            }
            return;
        }
        for i in 0..2 {
            prefix.push(i);
            walk(prefix, k, x, h, best);
            prefix.pop();
        }
    }
    let mut best = (f64::INFINITY, vec![]);
    walk(&mut Vec::new(), h.ncols(), x, h, &mut best);
    best.1
}

#[test]
fn map_matches_independent_enumeration() {
    let mut rng = seeded(40);
    for trial in 0..50 {
        let h = gaussian_matrix(4, 4, &mut rng);
        let ch = GaussianMimoChannel::bpsk(h.clone(), 0.5).unwrap();
        for x in ch.sample(20, trial).x {
            assert_eq!(map_exhaustive(&x, &ch).unwrap(), brute_force(&x, &h));
        }
    }
}

#[test]
fn map_is_exact_on_noiseless_inputs() {
    let h = exponential_decay_matrix(4, 4);
    let ch = GaussianMimoChannel::bpsk(h.clone(), 1e-12).unwrap();
    for c in 0..16usize {
        let labels: Vec<usize> = (0..4).map(|b| (c >> (3 - b)) & 1).collect();
        let x = &h * ch.symbols(&labels);
        assert_eq!(map_exhaustive(&x, &ch).unwrap(), labels);
    }
}

#[test]
fn pgd_agrees_with_map_on_easy_channel() {
    let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
    let ch = GaussianMimoChannel::bpsk(h.clone(), 0.1).unwrap();
    let x = &h * DVector::from_vec(vec![1.0, 1.0]);
    let init = DVector::from_vec(vec![1e-6, 1e-6]);
    let pgd = pgd_detect(&x, &ch, 0.1, 50, &init);
    assert_eq!(pgd, vec![1, 1]);
    assert_eq!(pgd, map_exhaustive(&x, &ch).unwrap());
}

#[test]
fn single_user_sic_is_scalar_map() {
    let mut rng = seeded(41);
    for _ in 0..50 {
        let h = gaussian_matrix(3, 1, &mut rng);
        let sigma = rng.random_range(0.2..2.0);
        let ch = GaussianMimoChannel::bpsk(h.clone(), sigma).unwrap();
        let x = DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
        let out = sic_detect(&x, &ch, 3).unwrap();
        // log P(+1)/P(-1) = 2 hᵀx / σ² for white noise.
        let llr = 2.0 * h.column(0).dot(&x) / (sigma * sigma);
        let p1 = 1.0 / (1.0 + (-llr).exp());
        assert!((out.pmfs[0][1] - p1).abs() < 1e-12);
        assert_eq!(out.labels[0], usize::from(h.column(0).dot(&x) > 0.0));
    }
}

#[test]
fn heavy_noise_makes_sic_uniform() {
    let ch = GaussianMimoChannel::bpsk(exponential_decay_matrix(4, 4), 1e3).unwrap();
    for s in ch.sample(20, 3).s {
        let out = sic_detect(&(ch.h() * s), &ch, 5).unwrap();
        for p in out.pmfs {
            assert!((p[0] - 0.5).abs() < 1e-3);
        }
    }
}

#[test]
fn analytic_deepsic_reproduces_sic() {
    let mut rng = seeded(42);
    let mut worst: f64 = 0.0;
    for (trial, k) in (0..100).map(|t| (t, if t % 2 == 0 { 2 } else { 4 })) {
        let h = gaussian_matrix(k, k, &mut rng);
        let sigma = rng.random_range(0.3..1.0);
        let ch = GaussianMimoChannel::bpsk(h, sigma).unwrap();
        let net = DeepSic::analytic(&ch, 4).unwrap();
        let x = &ch.sample(1, trial).x[0];
        let reference = sic_detect(x, &ch, 4).unwrap();
        let d = net.detect(x);
        assert_eq!(d.labels, reference.labels);
        for (a, b) in d.pmfs.unwrap().iter().zip(&reference.pmfs) {
            for (u, v) in a.iter().zip(b) {
                worst = worst.max((u - v).abs());
            }
        }
    }
    assert!(worst <= 1e-9, "max PMF gap {worst}");
}

#[test]
fn uniform_blocks_fall_back_to_first_symbol() {
    let blocks = (0..3)
        .map(|_| (0..2).map(|_| Arc::new(UniformBlock { levels: 2 }) as Arc<dyn SoftBlock>).collect())
        .collect();
    let net = DeepSic::from_blocks(Constellation::bpsk(), 2, blocks).unwrap();
    let d = net.detect(&DVector::from_vec(vec![3.0, -3.0]));
    assert_eq!(d.labels, vec![0, 0]);
}

#[test]
fn deepsic_pmfs_are_distributions() {
    let ch = GaussianMimoChannel::bpsk(exponential_decay_matrix(3, 3), 0.5).unwrap();
    let cfg = DeepSicTrainConfig {
        iterations: 2,
        epochs: 2,
        ..Default::default()
    };
    let (net, _) = DeepSic::train(&ch.sample(200, 1), Constellation::bpsk(), &cfg).unwrap();
    for x in ch.sample(50, 2).x {
        for p in net.detect(&x).pmfs.unwrap() {
            assert!(p.iter().all(|&v| v >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }
}

#[test]
fn sequential_training_visits_blocks_in_layer_order() {
    let ch = GaussianMimoChannel::bpsk(exponential_decay_matrix(3, 3), 0.5).unwrap();
    let cfg = DeepSicTrainConfig {
        iterations: 3,
        epochs: 1,
        ..Default::default()
    };
    let (_, report) = DeepSic::train(&ch.sample(100, 1), Constellation::bpsk(), &cfg).unwrap();
    let expected: Vec<(usize, usize)> = (0..3).flat_map(|q| (0..3).map(move |k| (q, k))).collect();
    assert_eq!(report.block_trainings, expected);
}

#[test]
fn trained_deepsic_round_trips_through_params() {
    let ch = GaussianMimoChannel::bpsk(exponential_decay_matrix(2, 2), 0.5).unwrap();
    let cfg = DeepSicTrainConfig {
        mode: TrainingMode::EndToEnd,
        iterations: 2,
        epochs: 3,
        ..Default::default()
    };
    let (net, _) = DeepSic::train(&ch.sample(300, 4), Constellation::bpsk(), &cfg).unwrap();
    let hidden = deepsic::default_hidden(2, 2);
    let back = DeepSic::from_params(Constellation::bpsk(), 2, 2, 2, hidden, net.params()).unwrap();
    for x in ch.sample(20, 5).x {
        assert_eq!(net.detect(&x), back.detect(&x));
    }
}

#[test]
fn deepsic_training_is_deterministic() {
    let ch = GaussianMimoChannel::bpsk(exponential_decay_matrix(2, 2), 0.5).unwrap();
    let cfg = DeepSicTrainConfig {
        iterations: 2,
        epochs: 2,
        ..Default::default()
    };
    let set = ch.sample(200, 6);
    let (a, _) = DeepSic::train(&set, Constellation::bpsk(), &cfg).unwrap();
    let (b, _) = DeepSic::train(&set, Constellation::bpsk(), &cfg).unwrap();
    assert_eq!(a.params(), b.params());
}

#[test]
fn detnet_learns_noiseless_identity_channel() {
    let ch = GaussianMimoChannel::bpsk(DMatrix::identity(2, 2), 1e-12).unwrap();
    let cfg = DetNetTrainConfig {
        layers: 3,
        epochs: 20,
        ..Default::default()
    };
    let train = ch.sample(2000, 1);
    let (net, losses) = DetNet::train(ch.h().clone(), Constellation::bpsk(), &train, &cfg).unwrap();
    assert!(losses.last() < losses.first());
    let errs = count_errors(&net, &ch.sample(1000, 2));
    assert!(errs.rate() <= 0.01, "accuracy too low: {errs:?}");
}

#[test]
fn detnet_training_lowers_loss_and_is_deterministic() {
    let h = exponential_decay_matrix(3, 3);
    let ch = GaussianMimoChannel::bpsk(h.clone(), 0.3).unwrap();
    let set = ch.sample(500, 3);
    let cfg = DetNetTrainConfig {
        layers: 4,
        epochs: 5,
        ..Default::default()
    };
    let init = DetNetTrainConfig { epochs: 0, ..cfg.clone() };
    let (untrained, _) = DetNet::train(h.clone(), Constellation::bpsk(), &set, &init).unwrap();
    let (a, _) = DetNet::train(h.clone(), Constellation::bpsk(), &set, &cfg).unwrap();
    let (b, _) = DetNet::train(h, Constellation::bpsk(), &set, &cfg).unwrap();
    assert!(a.loss(&set) < untrained.loss(&set));
    assert_eq!(a.params, b.params);
}

#[test]
fn detnet_estimates_stay_inside_unit_box() {
    let h = gaussian_matrix(4, 4, &mut seeded(8));
    let net = DetNet::new(h.clone(), Constellation::bpsk(), 5, 16, 0.5, &mut seeded(9)).unwrap();
    let ch = GaussianMimoChannel::bpsk(h, 0.5).unwrap();
    for x in ch.sample(50, 1).x {
        for s in net.forward(&(x * 100.0)) {
            assert!(s.iter().all(|v| v.abs() < 1.0));
        }
    }
}
