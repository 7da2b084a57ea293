use mbdl_autodiff::gradcheck::max_gradient_error;
use mbdl_sim::{seeded, StateSpaceModel, Transitions};
use mbdl_smoothing::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn model(seed: u64) -> StateSpaceModel {
    let mut rng = seeded(seed);
    let f = DMatrix::identity(3, 3) * 0.9 + DMatrix::from_fn(3, 3, |_, _| rng.random_range(-0.1..0.1));
    let h = DMatrix::from_fn(2, 3, |_, _| rng.random_range(-1.0..1.0));
    StateSpaceModel::new(
        Transitions::Constant(f),
        h,
        DMatrix::identity(3, 3) * 0.3,
        DMatrix::identity(2, 2) * 0.5,
        DVector::from_vec(vec![1.0, -0.5, 0.2]),
    )
    .unwrap()
}

fn labeled(model: &StateSpaceModel, count: usize, len: usize, seed: u64) -> Vec<LabeledTrajectory> {
    (0..count)
        .map(|i| {
            let tr = model.sample(len, seed + i as u64).unwrap();
            LabeledTrajectory {
                model: model.clone(),
                s: tr.s,
                x: tr.x,
            }
        })
        .collect()
}

/// Every weight random, including the output layer.
fn random_net(seed: u64) -> AugmentationNet {
    let mut rng = seeded(seed);
    let mut net = AugmentationNet::init(3, 2, &[5], vec![0.5; 14], 0.3, &mut rng);
    for t in net.params_mut().values_mut() {
        for v in t.data_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
    }
    net
}

#[test]
fn zero_network_is_the_plain_smoother() {
    let m = model(1);
    let x = m.sample(30, 2).unwrap().x;
    let cfg = SmootherConfig {
        eta: 0.05,
        iters: 40,
        max_halvings: 0,
        ..Default::default()
    };
    let plain = gradient_smoother(&x, &m, &cfg).unwrap().trajectory;
    let aug = neural_augmented_smoother(&x, &m, &AugmentationNet::zero(3, 2, &[8, 8]), &cfg).unwrap();
    assert_eq!(aug.len(), 40);
    for (a, b) in aug.last().unwrap().iter().zip(&plain) {
        for (u, v) in a.iter().zip(b.iter()) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
    }
}

#[test]
fn unrolled_loss_gradients_match_finite_differences() {
    let m = model(3);
    let data = labeled(&m, 2, 4, 10);
    let batch: Vec<&LabeledTrajectory> = data.iter().collect();
    let net = random_net(4);
    let (mut g, b) = unrolled_loss_graph(&batch, &net, 0.1, 3, InitialGuess::ObservationLift).unwrap();
    let err = max_gradient_error(&mut g, &b, 1e-5).unwrap();
    assert!(err <= 1e-5, "relative gradient error {err}");
}

#[test]
fn unrolled_loss_weights_iterations_by_q_over_q() {
    let m = model(5);
    let data = labeled(&m, 3, 6, 20);
    let batch: Vec<&LabeledTrajectory> = data.iter().collect();
    let net = random_net(6);
    let cfg = SmootherConfig {
        eta: 0.1,
        iters: 4,
        ..Default::default()
    };
    let (mut g, b) = unrolled_loss_graph(&batch, &net, cfg.eta, cfg.iters, cfg.init).unwrap();
    let got = g.eval(&b).unwrap().item();
    let mut want = 0.0;
    let rows: usize = data.iter().map(|d| d.s.len()).sum();
    for q in 0..4 {
        let mut sq = 0.0;
        for tr in &data {
            let est = neural_augmented_smoother(&tr.x, &tr.model, &net, &cfg).unwrap();
            sq += est[q].iter().zip(&tr.s).map(|(a, b)| (a - b).norm_squared()).sum::<f64>();
        }
        want += (q + 1) as f64 / 4.0 * sq / rows as f64;
    }
    assert!((got - want).abs() <= 1e-10 * want, "{got} vs {want}");
}

#[test]
fn correction_stays_negligible_without_mismatch() {
    let m = model(7);
    let train = labeled(&m, 64, 40, 1000);
    let test = labeled(&m, 20, 40, 5000);
    let eta = 0.9 / lipschitz_bound(&m, 40, 300).unwrap();
    let cfg = AugmentConfig {
        smoother: SmootherConfig {
            eta,
            iters: 20,
            max_halvings: 0,
            ..Default::default()
        },
        epochs: 20,
        ..Default::default()
    };
    let (net, losses) = train_augmentation(&train, &cfg).unwrap();
    assert!(losses.iter().all(|l| l.is_finite()));
    let (mut plain, mut hybrid) = (0.0, 0.0);
    for tr in &test {
        plain += trajectory_mse(&gradient_smoother(&tr.x, &m, &cfg.smoother).unwrap().trajectory, &tr.s);
        hybrid += trajectory_mse(neural_augmented_smoother(&tr.x, &m, &net, &cfg.smoother).unwrap().last().unwrap(), &tr.s);
    }
    assert!(hybrid <= 1.05 * plain, "hybrid {hybrid} vs plain {plain}");
}

#[test]
fn training_is_deterministic() {
    let m = model(8);
    let train = labeled(&m, 8, 10, 50);
    let cfg = AugmentConfig {
        hidden: vec![6],
        epochs: 3,
        smoother: SmootherConfig {
            eta: 0.05,
            iters: 5,
            ..Default::default()
        },
        ..Default::default()
    };
    let (a, la) = train_augmentation(&train, &cfg).unwrap();
    let (b, lb) = train_augmentation(&train, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(la, lb);
}

#[test]
fn mixed_noise_models_cannot_share_a_batch() {
    let a = labeled(&model(1), 1, 5, 0);
    let mut b = labeled(&model(1), 1, 5, 1);
    b[0].model = StateSpaceModel::new(
        b[0].model.transitions().clone(),
        b[0].model.h_obs().clone(),
        DMatrix::identity(3, 3),
        b[0].model.r().clone(),
        b[0].model.s0().clone(),
    )
    .unwrap();
    let net = AugmentationNet::zero(3, 2, &[4]);
    assert!(unrolled_loss_graph(&[&a[0], &b[0]], &net, 0.1, 2, InitialGuess::Zeros).is_err());
}
