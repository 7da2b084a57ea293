use mbdl_autodiff::gradcheck::max_gradient_error;
use mbdl_autodiff::loss::{log_layer_weights, weighted_l2_node};
use mbdl_autodiff::{bindings, Graph, Tensor};
use mbdl_detection::*;
use mbdl_sim::gaussian::gaussian_matrix;
use mbdl_sim::{seeded, Constellation, GaussianMimoChannel};
use nalgebra::DVector;
use proptest::prelude::*;

#[test]
fn detnet_loss_gradients_match_finite_differences() {
    let h = gaussian_matrix(3, 3, &mut seeded(5));
    let net = DetNet::new(h.clone(), Constellation::bpsk(), 3, 5, 0.4, &mut seeded(6)).unwrap();
    let ch = GaussianMimoChannel::bpsk(h, 0.5).unwrap();
    let set = ch.sample(6, 7);
    let mut g = Graph::new();
    let x = g.input("x");
    let s0 = g.input("s0");
    let s = g.input("s");
    let outs = net.build(&mut g, x, s0);
    let loss = weighted_l2_node(&mut g, &outs, s, &log_layer_weights(3));
    g.set_output(loss);
    let b = bindings([
        ("x", stack_rows(&set.x)),
        ("s0", Tensor::zeros(&[6, 3])),
        ("s", stack_rows(&set.s)),
    ]);
    let err = max_gradient_error(&mut g, &b, 1e-5).unwrap();
    assert!(err <= 1e-5, "relative gradient error {err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn map_recovers_noiseless_symbols(seed in any::<u64>(), labels in prop::collection::vec(0usize..2, 3)) {
        let h = gaussian_matrix(4, 3, &mut seeded(seed));
        let ch = GaussianMimoChannel::bpsk(h.clone(), 0.1).unwrap();
        let x = &h * ch.symbols(&labels);
        prop_assert_eq!(map_exhaustive(&x, &ch).unwrap(), labels);
    }

    #[test]
    fn sic_pmfs_are_distributions(seed in any::<u64>(), sigma in 0.05f64..5.0, iters in 0usize..6) {
        let h = gaussian_matrix(4, 4, &mut seeded(seed));
        let ch = GaussianMimoChannel::bpsk(h, sigma).unwrap();
        let x = &ch.sample(1, seed).x[0];
        for p in sic_detect(x, &ch, iters).unwrap().pmfs {
            prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn detnet_layers_stay_in_open_box(seed in any::<u64>(), scale in 0.0f64..1e3) {
        let h = gaussian_matrix(3, 3, &mut seeded(seed));
        let net = DetNet::new(h, Constellation::bpsk(), 4, 12, 0.5, &mut seeded(seed ^ 1)).unwrap();
        let x = DVector::from_vec(vec![scale, -0.5 * scale, 0.25]);
        for s in net.forward(&x) {
            prop_assert!(s.iter().all(|v| v.abs() < 1.0));
        }
    }
}
