use mbdl_detection::{
    count_errors, DeepSic, DeepSicTrainConfig, Detector, DetNet, DetNetTrainConfig, GaussianSurrogate, MapDetector,
    PgdDetector, SicDetector,
};
use mbdl_sim::gaussian::{exponential_decay_matrix, gaussian_matrix};
use mbdl_sim::{noise_std_from_snr_db, rho_from_snr_db, seeded, Constellation, GaussianMimoChannel, LabeledSet, PoissonChannel};

use super::{task_err, Outcome, Task};
use crate::config::ChannelKind;
use crate::metrics::Metric;
use crate::BenchError;

/// The fixed `N(0, 1/N)` channel of a config at the task's SNR.
pub(crate) fn gaussian_channel(task: &Task) -> Result<GaussianMimoChannel, BenchError> {
    let m = &task.config.model;
    let h = gaussian_matrix(m.receivers, m.users, &mut seeded(m.channel_seed));
    GaussianMimoChannel::bpsk(h, noise_std_from_snr_db(task.snr())).map_err(task_err)
}

fn test_vectors(task: &Task) -> usize {
    task.config.model.test_symbols.div_ceil(task.config.model.users)
}

fn evaluate(out: &mut Outcome, task: &Task, method: &str, detector: &dyn Detector, test: &LabeledSet) {
    let errs = out.timed(task, method, test.len(), || count_errors(detector, test));
    out.metrics.push(task.ser(method, errs.errors, errs.symbols));
}

pub(crate) fn detnet(task: &Task) -> Result<Outcome, BenchError> {
    let ch = gaussian_channel(task)?;
    let train = ch.sample(task.n_t(), task.stream(0));
    let test = ch.sample(test_vectors(task), task.stream(1));
    let defaults = DetNetTrainConfig::default();
    let cfg = DetNetTrainConfig {
        layers: task.q(),
        epochs: task.epochs_or(defaults.epochs),
        seed: task.stream(2),
        ..defaults
    };
    let (net, _) = DetNet::train(ch.h().clone(), Constellation::bpsk(), &train, &cfg).map_err(task_err)?;
    let gram = ch.h().transpose() * ch.h();
    let eta = 1.0 / gram.symmetric_eigenvalues().max();
    let pgd = PgdDetector::new(ch.clone(), eta, task.config.model.pgd_iters);
    let map = MapDetector::new(&ch).map_err(task_err)?;

    let mut out = Outcome::default();
    evaluate(&mut out, task, "detnet", &net, &test);
    evaluate(&mut out, task, "pgd", &pgd, &test);
    evaluate(&mut out, task, "map", &map, &test);
    out.metrics.push(task.record("detnet", Metric::Params, net.param_count() as f64, 1));
    Ok(out)
}

pub(crate) fn deepsic(task: &Task) -> Result<Outcome, BenchError> {
    let q = task.q();
    let defaults = DeepSicTrainConfig::default();
    let cfg = DeepSicTrainConfig {
        iterations: q,
        epochs: task.epochs_or(defaults.epochs),
        seed: task.stream(2),
        ..defaults
    };
    let mut out = Outcome::default();
    match task.config.model.channel {
        ChannelKind::Gaussian => {
            let ch = gaussian_channel(task)?;
            let train = ch.sample(task.n_t(), task.stream(0));
            let test = ch.sample(test_vectors(task), task.stream(1));
            let (net, _) = DeepSic::train(&train, Constellation::bpsk(), &cfg).map_err(task_err)?;
            let sic = SicDetector::new(ch.clone(), q).map_err(task_err)?;
            let map = MapDetector::new(&ch).map_err(task_err)?;
            evaluate(&mut out, task, "deepsic", &net, &test);
            evaluate(&mut out, task, "sic", &sic, &test);
            evaluate(&mut out, task, "map", &map, &test);
            out.metrics.push(task.record("deepsic", Metric::Params, param_count(&net) as f64, 1));
        }
        ChannelKind::Poisson => {
            let m = &task.config.model;
            let h = exponential_decay_matrix(m.receivers, m.users);
            let ch = PoissonChannel::bpsk(h, rho_from_snr_db(task.snr())).map_err(task_err)?;
            let train = ch.sample(task.n_t(), task.stream(0)).map_err(task_err)?;
            let test = ch.sample(test_vectors(task), task.stream(1)).map_err(task_err)?;
            let (net, _) = DeepSic::train(&train, Constellation::bpsk(), &cfg).map_err(task_err)?;
            let assumed = GaussianSurrogate::assumed(&ch, noise_std_from_snr_db(task.snr())).map_err(task_err)?;
            let mismatched = SicDetector::mismatched(assumed, q).map_err(task_err)?;
            let matched = SicDetector::mismatched(GaussianSurrogate::moment_matched(&ch).map_err(task_err)?, q)
                .map_err(task_err)?;
            evaluate(&mut out, task, "deepsic", &net, &test);
            evaluate(&mut out, task, "sic-mismatched", &mismatched, &test);
            evaluate(&mut out, task, "sic-moment-matched", &matched, &test);
            out.metrics.push(task.record("deepsic", Metric::Params, param_count(&net) as f64, 1));
        }
    }
    Ok(out)
}

fn param_count(net: &DeepSic) -> usize {
    net.params().values().map(|t| t.len()).sum()
}
