use mbdl_factor_graph::{
    full_labels, learn_function_node, learn_transition_histogram, training_pairs, AnalyticNode, LearnedFgConfig,
    SequenceDetector,
};
use mbdl_sim::markov::{exponential_taps, Emission};
use mbdl_sim::{derive_seed, noise_std_from_snr_db, rho_from_snr_db, Constellation, MarkovSequenceModel};

use super::{task_err, Outcome, Task};
use crate::config::ChannelKind;
use crate::metrics::Metric;
use crate::BenchError;

/// Uniform i.i.d. BPSK through `exp(-l)` ISI taps. The Gaussian variant
/// doubles as the mismatched model assumed for the Poisson channel.
fn models(task: &Task) -> Result<(MarkovSequenceModel, MarkovSequenceModel), BenchError> {
    let j = task.config.model.memory;
    let taps = exponential_taps(j, 1.0);
    let gaussian = Emission::GaussianIsi {
        taps: taps.clone(),
        sigma: noise_std_from_snr_db(task.snr()),
    };
    let emission = match task.config.model.channel {
        ChannelKind::Gaussian => gaussian.clone(),
        ChannelKind::Poisson => Emission::PoissonIsi {
            taps,
            rho: rho_from_snr_db(task.snr()),
        },
    };
    let truth = MarkovSequenceModel::uniform(j, Constellation::bpsk(), emission).map_err(task_err)?;
    let assumed = truth.with_emission(gaussian).map_err(task_err)?;
    Ok((truth, assumed))
}

fn evaluate(
    out: &mut Outcome,
    task: &Task,
    method: &str,
    detector: &dyn SequenceDetector,
    truth: &MarkovSequenceModel,
) -> Result<(), BenchError> {
    let m = &task.config.model;
    let blocks = m.test_symbols.div_ceil(m.block_len);
    let samples = (0..blocks)
        .map(|b| truth.sample(m.block_len, derive_seed(task.stream(1), b as u64)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(task_err)?;
    let decisions = out.timed(task, method, blocks * m.block_len, || {
        samples
            .iter()
            .map(|s| detector.detect(&s.x, Some(&s.initial)))
            .collect::<Result<Vec<_>, _>>()
    });
    let decisions = decisions.map_err(task_err)?;
    let errors = samples
        .iter()
        .zip(&decisions)
        .map(|(s, d)| s.labels.iter().zip(d).filter(|(a, b)| a != b).count())
        .sum();
    out.metrics.push(task.ser(method, errors, blocks * m.block_len));
    Ok(())
}

pub(crate) fn learned_fg(task: &Task) -> Result<Outcome, BenchError> {
    let (truth, assumed) = models(task)?;
    let (m, j) = (truth.constellation().len(), truth.memory());
    let sample = truth.sample(task.n_t(), task.stream(0)).map_err(task_err)?;
    let (xs, tuples) = training_pairs(&sample, m, j);
    let histogram = learn_transition_histogram(&[full_labels(&sample)], m, j).map_err(task_err)?;
    let defaults = LearnedFgConfig::default();
    let cfg = LearnedFgConfig {
        epochs: task.epochs_or(defaults.epochs),
        seed: task.stream(2),
        ..defaults
    };
    let (learned, _) = learn_function_node(&xs, &tuples, histogram, &cfg).map_err(task_err)?;

    let mut out = Outcome::default();
    evaluate(&mut out, task, "learned-fg", &learned, &truth)?;
    match task.config.model.channel {
        ChannelKind::Gaussian => evaluate(&mut out, task, "sp", &AnalyticNode::new(truth.clone()), &truth)?,
        ChannelKind::Poisson => evaluate(&mut out, task, "sp-mismatched", &AnalyticNode::new(assumed), &truth)?,
    }
    let params = learned.classifier.params().values().map(|t| t.len()).sum::<usize>();
    out.metrics.push(task.record("learned-fg", Metric::Params, params as f64, 1));
    Ok(out)
}
