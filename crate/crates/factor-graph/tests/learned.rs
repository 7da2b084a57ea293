use mbdl_factor_graph::*;
use mbdl_sim::markov::{exponential_taps, Emission};
use mbdl_sim::{noise_std_from_snr_db, rho_from_snr_db, seeded, Constellation, MarkovSequenceModel};
use rand::Rng;

fn toy_model() -> MarkovSequenceModel {
    MarkovSequenceModel::new(
        1,
        Constellation::bpsk(),
        vec![vec![0.8, 0.2], vec![0.3, 0.7]],
        Emission::GaussianIsi {
            taps: vec![1.0, 0.6],
            sigma: 0.7,
        },
    )
    .unwrap()
}

/// Stationary tuple law `π(prev) P(sym | prev)` by power iteration.
fn exact_tuple_marginal(model: &MarkovSequenceModel) -> Vec<f64> {
    let t = model.transitions();
    let mut pi = vec![0.5, 0.5];
    for _ in 0..500 {
        pi = vec![pi[0] * t[0][0] + pi[1] * t[1][0], pi[0] * t[0][1] + pi[1] * t[1][1]];
    }
    (0..4).map(|k| pi[k / 2] * t[k / 2][k % 2]).collect()
}

/// Bayes posterior over tuples under the true model.
struct ExactPosterior {
    model: MarkovSequenceModel,
    prior: Vec<f64>,
}

impl TupleClassifier for ExactPosterior {
    fn classes(&self) -> usize {
        4
    }
    fn posteriors(&self, xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter()
            .map(|&x| {
                let w: Vec<f64> = (0..4)
                    .map(|k| self.prior[k] * self.model.likelihood(x, &[k / 2, k % 2]))
                    .collect();
                let z: f64 = w.iter().sum();
                w.iter().map(|v| v / z).collect()
            })
            .collect()
    }
}

#[test]
fn exact_classifier_reproduces_analytic_decisions() {
    let model = toy_model();
    let prior = exact_tuple_marginal(&model);
    let hist = TransitionHistogram::from_tables(2, 1, model.transitions().to_vec(), prior.clone()).unwrap();
    let learned = LearnedFgModel::new(
        ExactPosterior {
            model: model.clone(),
            prior,
        },
        hist,
    )
    .unwrap();
    let analytic = AnalyticNode::new(model.clone());
    for seed in 0..20 {
        let s = model.sample(200, seed).unwrap();
        for init in [Some(s.initial.as_slice()), None] {
            let a = sp_posteriors(&s.x, &analytic, init, true).unwrap();
            let l = sp_posteriors(&s.x, &learned, init, true).unwrap();
            for (p, q) in a.marginals.iter().flatten().zip(l.marginals.iter().flatten()) {
                assert!((p - q).abs() < 1e-9);
            }
            assert_eq!(analytic.detect(&s.x, init).unwrap(), learned.detect(&s.x, init).unwrap());
        }
    }
}

#[test]
fn histogram_of_iid_labels_is_uniform() {
    let mut rng = seeded(11);
    let seq: Vec<usize> = (0..100_000).map(|_| rng.random_range(0..2)).collect();
    let h = learn_transition_histogram(&[seq], 2, 1).unwrap();
    for p in h.transitions.iter().flatten() {
        assert!((p - 0.5).abs() < 0.01, "{p}");
    }
    assert!(h.warnings.is_empty());
}

fn quick_config(seed: u64) -> LearnedFgConfig {
    LearnedFgConfig {
        hidden: vec![16],
        epochs: 5,
        seed,
        ..LearnedFgConfig::default()
    }
}

fn train(model: &MarkovSequenceModel, n: usize, config: &LearnedFgConfig, data_seed: u64) -> LearnedFgModel {
    let (m, j) = (model.constellation().len(), model.memory());
    let sample = model.sample(n, data_seed).unwrap();
    let (xs, tuples) = training_pairs(&sample, m, j);
    let hist = learn_transition_histogram(&[full_labels(&sample)], m, j).unwrap();
    learn_function_node(&xs, &tuples, hist, config).unwrap().0
}

#[test]
fn training_is_deterministic() {
    let model = toy_model();
    let a = train(&model, 500, &quick_config(3), 1);
    let b = train(&model, 500, &quick_config(3), 1);
    assert_eq!(a.classifier, b.classifier);
    let x = model.sample(100, 9).unwrap().x;
    assert_eq!(a.detect(&x, None).unwrap(), b.detect(&x, None).unwrap());
    let c = train(&model, 500, &quick_config(4), 1);
    assert_ne!(a.classifier, c.classifier);
}

#[test]
fn learned_node_is_zero_off_shift() {
    let model = toy_model();
    let learned = train(&model, 300, &quick_config(0), 2);
    for x in [-2.0, 0.1, 1.7] {
        for prev in 0..2 {
            for cur in 0..2 {
                let v = learned.evaluate(x, cur, prev);
                // With J = 1 every pair is a shift; the structure shows at J = 2.
                assert!(v > 0.0);
            }
        }
    }
    let deep = MarkovSequenceModel::uniform(2, Constellation::bpsk(), Emission::GaussianIsi {
        taps: vec![1.0, 0.5, 0.2],
        sigma: 0.5,
    })
    .unwrap();
    let learned = train(&deep, 300, &quick_config(0), 2);
    for prev in 0..4 {
        for cur in 0..4 {
            assert_eq!(learned.evaluate(0.3, cur, prev) > 0.0, cur / 2 == prev % 2);
        }
    }
}

#[test]
fn saved_model_round_trips() {
    let model = toy_model();
    let learned = train(&model, 300, &quick_config(5), 6);
    let dir = std::env::temp_dir().join(format!("mbdl-fg-{}", std::process::id()));
    learned.save(&dir).unwrap();
    let back = LearnedFgModel::load(&dir, 2, 1, &[16]).unwrap();
    std::fs::remove_dir_all(&dir).unwrap();
    assert_eq!(back.classifier, learned.classifier);
    assert_eq!(back.histogram.transitions, learned.histogram.transitions);
    let x = model.sample(50, 1).unwrap().x;
    assert_eq!(back.detect(&x, None).unwrap(), learned.detect(&x, None).unwrap());
}

fn ser(detector: &dyn SequenceDetector, model: &MarkovSequenceModel, blocks: usize, len: usize, seed: u64) -> f64 {
    let mut errors = 0;
    for b in 0..blocks {
        let s = model.sample(len, seed + b as u64).unwrap();
        let d = detector.detect(&s.x, Some(&s.initial)).unwrap();
        errors += d.iter().zip(&s.labels).filter(|(a, b)| a != b).count();
    }
    errors as f64 / (blocks * len) as f64
}

#[test]
fn learned_graph_approaches_sum_product_on_gaussian_isi() {
    let model = MarkovSequenceModel::uniform(
        4,
        Constellation::bpsk(),
        Emission::GaussianIsi {
            taps: exponential_taps(4, 1.0),
            sigma: noise_std_from_snr_db(8.0),
        },
    )
    .unwrap();
    let learned = train(&model, 5000, &LearnedFgConfig::default(), 100);
    let sp = ser(&AnalyticNode::new(model.clone()), &model, 100, 1000, 1_000);
    let lf = ser(&learned, &model, 100, 1000, 1_000);
    assert!(lf <= 3.0 * sp, "learned {lf} vs sum-product {sp}");
}

#[test]
fn learned_graph_beats_mismatched_model_on_poisson_isi() {
    let taps = exponential_taps(4, 1.0);
    let truth = MarkovSequenceModel::uniform(
        4,
        Constellation::bpsk(),
        Emission::PoissonIsi {
            taps: taps.clone(),
            rho: rho_from_snr_db(8.0),
        },
    )
    .unwrap();
    let assumed = truth
        .with_emission(Emission::GaussianIsi {
            taps,
            sigma: noise_std_from_snr_db(8.0),
        })
        .unwrap();
    let learned = train(&truth, 5000, &LearnedFgConfig::default(), 200);
    let mismatched = ser(&AnalyticNode::new(assumed), &truth, 20, 1000, 2_000);
    let lf = ser(&learned, &truth, 20, 1000, 2_000);
    assert!(lf < mismatched, "learned {lf} vs mismatched {mismatched}");
}
