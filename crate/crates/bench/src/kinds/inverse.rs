use mbdl_autodiff::Tensor;
use mbdl_inverse::planted::{bump_kernel, conv_sample, smooth_signal, subspace_basis, subspace_signal};
use mbdl_inverse::{
    admm_lasso_steps, csgm_recover, dcea_forward, dcea_train, dense_baseline, lasso_coordinate_descent, mse,
    pnp_admm, pretrain_generator, train_denoiser, DceaTrainConfig, DceaVariant, DenoiserTrainConfig,
    GeneratorConfig, LassoProblem,
};
use mbdl_sim::gaussian::gaussian_matrix;
use mbdl_sim::seeded;
use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{task_err, Outcome, Task};
use crate::metrics::Metric;
use crate::BenchError;

fn add_noise(v: DVector<f64>, std: f64, rng: &mut impl Rng) -> DVector<f64> {
    if std == 0.0 {
        return v;
    }
    v.map(|a| {
        let e: f64 = StandardNormal.sample(rng);
        a + std * e
    })
}

fn mean_of(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn measurements(task: &Task) -> usize {
    task.point.m.expect("kind uses the M axis")
}

fn check_measurements(task: &Task, n: usize) -> Result<usize, BenchError> {
    let m = measurements(task);
    if m > n {
        return Err(BenchError::Config(format!("{m} measurements exceed signal length {n}")));
    }
    Ok(m)
}

/// Poisson denoising of planted convolutional signals: DCEA-C and DCEA-UC
/// against the noisy input, plus parameter counts against the dense
/// baseline.
pub(crate) fn dcea(task: &Task) -> Result<Outcome, BenchError> {
    let n = task.config.model.signal_len.unwrap_or(32);
    let trials = task.config.model.trials.unwrap_or(100);
    let kernel = Tensor::matrix(1, 5, bump_kernel(5));
    let draw = |count: usize, seed: u64| -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let mut rng = seeded(seed);
        (0..count)
            .map(|_| {
                let s = conv_sample(&kernel, n, 0.1, (0.5, 1.5), &mut rng);
                (s.mean, s.x)
            })
            .unzip()
    };
    let (clean, noisy) = draw(task.n_t(), task.stream(0));
    let (test_clean, test_noisy) = draw(trials, task.stream(1));

    let mut out = Outcome::default();
    let identity: Vec<f64> = test_noisy.iter().zip(&test_clean).map(|(x, c)| mse(x, c)).collect();
    out.metrics.push(task.record("identity", Metric::Mse, mean_of(&identity), trials));
    for (variant, name) in [(DceaVariant::C, "dcea-c"), (DceaVariant::UC, "dcea-uc")] {
        let defaults = DceaTrainConfig::default();
        let cfg = DceaTrainConfig {
            variant,
            layers: task.q(),
            epochs: task.epochs_or(defaults.epochs),
            seed: task.stream(2),
            ..defaults
        };
        let (params, _) = dcea_train(&clean, &noisy, &cfg).map_err(task_err)?;
        let denoised = out.timed(task, name, trials, || {
            test_noisy.iter().map(|x| dcea_forward(&params, x)).collect::<Result<Vec<_>, _>>()
        });
        let errs: Vec<f64> = denoised
            .map_err(task_err)?
            .iter()
            .zip(&test_clean)
            .map(|(d, c)| mse(&d.mean, c))
            .collect();
        out.metrics.push(task.record(name, Metric::Mse, mean_of(&errs), trials));
        out.metrics.push(task.record(name, Metric::Params, params.param_count() as f64, 1));
    }
    out.metrics.push(task.record("dense-baseline", Metric::Params, dense_baseline(n).param_count() as f64, 1));
    Ok(out)
}

/// Compressed sensing of subspace signals: CSGM with a pretrained decoder
/// against LASSO in the canonical basis.
pub(crate) fn csgm(task: &Task) -> Result<Outcome, BenchError> {
    let model = &task.config.model;
    let n = model.signal_len.unwrap_or(64);
    let trials = model.trials.unwrap_or(20);
    let noise = model.noise_std.unwrap_or(0.0);
    let m = check_measurements(task, n)?;
    let mut rng = seeded(task.stream(0));
    let basis = subspace_basis(n, model.latent, &mut rng);
    let train: Vec<_> = (0..task.n_t()).map(|_| subspace_signal(&basis, &mut rng)).collect();
    let test: Vec<_> = (0..trials).map(|_| subspace_signal(&basis, &mut rng)).collect();
    let defaults = GeneratorConfig::default();
    let cfg = GeneratorConfig {
        epochs: task.epochs_or(defaults.epochs),
        seed: task.stream(2),
        ..defaults
    };
    let (prior, _) = pretrain_generator(&train, model.latent, &cfg).map_err(task_err)?;

    let mut rng = seeded(task.stream(1));
    let problems: Vec<_> = test
        .iter()
        .map(|s| {
            let h = gaussian_matrix(m, n, &mut rng);
            let x = add_noise(&h * s, noise, &mut rng);
            (h, x)
        })
        .collect();
    let mut out = Outcome::default();
    let recovered = out.timed(task, "csgm", trials, || {
        problems
            .iter()
            .enumerate()
            .map(|(t, (h, x))| csgm_recover(&prior, x, h, 1e-3, 3, 2000, t as u64).map(|r| r.signal))
            .collect::<Result<Vec<_>, _>>()
    });
    let recovered = recovered.map_err(task_err)?;
    let lasso = out.timed(task, "lasso", trials, || {
        problems
            .iter()
            .map(|(h, x)| {
                LassoProblem::new(h.clone(), x.clone(), 0.01).map(|p| lasso_coordinate_descent(&p, 1e-12, 10_000).coef)
            })
            .collect::<Result<Vec<_>, _>>()
    });
    let lasso = lasso.map_err(task_err)?;
    let err = |est: &[DVector<f64>]| mean_of(&est.iter().zip(&test).map(|(e, s)| mse(e, s)).collect::<Vec<_>>());
    out.metrics.push(task.record("csgm", Metric::Mse, err(&recovered), trials));
    out.metrics.push(task.record("lasso", Metric::Mse, err(&lasso), trials));
    Ok(out)
}

/// Plug-and-play ADMM with a learned denoiser against ℓ1 ADMM on smooth
/// signals, both at a fixed budget of Q iterations.
pub(crate) fn pnp(task: &Task) -> Result<Outcome, BenchError> {
    let model = &task.config.model;
    let n = model.signal_len.unwrap_or(32);
    let trials = model.trials.unwrap_or(30);
    let noise = model.noise_std.unwrap_or(0.05);
    let m = check_measurements(task, n)?;
    let iters = task.q();
    let mut rng = seeded(task.stream(0));
    let corpus: Vec<_> = (0..task.n_t()).map(|_| smooth_signal(n, &mut rng)).collect();
    let defaults = DenoiserTrainConfig::default();
    let cfg = DenoiserTrainConfig {
        epochs: task.epochs_or(defaults.epochs),
        seed: task.stream(2),
        ..defaults
    };
    let (denoiser, _) = train_denoiser(&corpus, &[0.05, 0.1, 0.2, 0.4], &cfg).map_err(task_err)?;

    let mut rng = seeded(task.stream(1));
    let cases: Vec<_> = (0..trials)
        .map(|_| {
            let s = smooth_signal(n, &mut rng);
            let h = gaussian_matrix(m, n, &mut rng);
            let x = add_noise(&h * &s, noise, &mut rng);
            (s, h, x)
        })
        .collect();
    let mut out = Outcome::default();
    let learned = out.timed(task, "pnp", trials, || {
        cases
            .iter()
            .map(|(s, h, x)| pnp_admm(x, h, 1.0, &denoiser, &[0.1], iters).map(|r| mse(&r.estimate, s)))
            .collect::<Result<Vec<_>, _>>()
    });
    let l1 = out.timed(task, "admm-l1", trials, || {
        cases
            .iter()
            .map(|(s, h, x)| {
                let p = LassoProblem::new(h.clone(), x.clone(), 0.1)?;
                let (steps, _) = admm_lasso_steps(&p, 1.0, None, iters)?;
                Ok(steps.last().map_or(f64::NAN, |st| mse(&st.s, s)))
            })
            .collect::<Result<Vec<_>, mbdl_inverse::InverseError>>()
    });
    out.metrics.push(task.record("pnp", Metric::Mse, mean_of(&learned.map_err(task_err)?), trials));
    out.metrics.push(task.record("admm-l1", Metric::Mse, mean_of(&l1.map_err(task_err)?), trials));
    out.metrics.push(task.record("pnp", Metric::Params, denoiser.param_count() as f64, 1));
    Ok(out)
}
