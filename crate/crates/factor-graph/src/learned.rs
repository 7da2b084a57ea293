//! Learned factor graphs: a classifier over `(J+1)`-tuples plus histograms
//! stand in for the analytic function node.

use std::path::Path;

use mbdl_autodiff::loss::one_hot;
use mbdl_autodiff::{checkpoint, fit, softmax_slice, Activation, FitConfig, Graph, Mlp, Optimizer, OptimizerConfig, Params, Tensor};
use mbdl_sim::markov::MarkovSample;
use mbdl_sim::seeded;

use crate::error::FgError;
use crate::histogram::TransitionHistogram;
use crate::node::{AnalyticNode, FunctionNode};
use crate::sp::sp_map_detect;
use crate::SequenceDetector;

/// `P̂(s_{i-J}, …, s_i | x_i)` for a batch of scalar observations. Classes
/// are tuple indices, most recent symbol least significant.
pub trait TupleClassifier: Send + Sync {
    fn classes(&self) -> usize;
    /// One PMF per observation.
    fn posteriors(&self, xs: &[f64]) -> Vec<Vec<f64>>;
}

/// Dense softmax classifier on the standardized observation.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpClassifier {
    mlp: Mlp,
    params: Params,
    mean: f64,
    scale: f64,
}

const STANDARDIZE: &str = "classifier.standardize";

fn classifier_mlp(classes: usize, hidden: &[usize]) -> Mlp {
    let mut sizes = vec![1];
    sizes.extend_from_slice(hidden);
    sizes.push(classes);
    Mlp::new("classifier", &sizes, Activation::Tanh, Activation::Identity)
}

impl MlpClassifier {
    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn hidden(&self) -> &[usize] {
        &self.mlp.sizes[1..self.mlp.sizes.len() - 1]
    }

    /// Weights plus the standardization constants under one map, for
    /// checkpointing.
    pub fn to_params(&self) -> Params {
        let mut p = self.params.clone();
        p.insert(STANDARDIZE.into(), Tensor::vector(vec![self.mean, self.scale]));
        p
    }

    pub fn from_params(classes: usize, hidden: &[usize], mut params: Params) -> Result<Self, FgError> {
        let mlp = classifier_mlp(classes, hidden);
        let st = params
            .remove(STANDARDIZE)
            .ok_or_else(|| FgError::InvalidConfig(format!("missing {STANDARDIZE}")))?;
        for l in 0..mlp.layers() {
            for name in [mlp.weight_name(l), mlp.bias_name(l)] {
                if !params.contains_key(&name) {
                    return Err(FgError::InvalidConfig(format!("missing parameter {name}")));
                }
            }
        }
        Ok(Self {
            mlp,
            params,
            mean: st.data()[0],
            scale: st.data()[1],
        })
    }
}

impl TupleClassifier for MlpClassifier {
    fn classes(&self) -> usize {
        *self.mlp.sizes.last().expect("non-empty sizes")
    }

    fn posteriors(&self, xs: &[f64]) -> Vec<Vec<f64>> {
        let input = Tensor::matrix(xs.len(), 1, xs.iter().map(|x| (x - self.mean) / self.scale).collect());
        let logits = self.mlp.forward(&self.params, &input);
        let c = logits.cols();
        logits.data().chunks(c).map(softmax_slice).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnedFgConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl Default for LearnedFgConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            epochs: 60,
            batch_size: 64,
            optimizer: OptimizerConfig::adam(1e-2),
            seed: 0,
        }
    }
}

/// `f̂(x, s̄_i, s̄_{i-1}) = P̂_θ(tuple | x) / P̂(tuple) · P̂(s_i | s̄_{i-1})`,
/// taking `P(x) ≡ 1`.
#[derive(Clone)]
pub struct LearnedFgModel<C: TupleClassifier = MlpClassifier> {
    pub classifier: C,
    pub histogram: TransitionHistogram,
    /// Coverage warnings from the histogram and the training labels.
    pub warnings: Vec<String>,
}

impl<C: TupleClassifier> LearnedFgModel<C> {
    pub fn new(classifier: C, histogram: TransitionHistogram) -> Result<Self, FgError> {
        let classes = histogram.alphabet().pow(histogram.memory() as u32 + 1);
        if classifier.classes() != classes {
            return Err(FgError::InvalidConfig(format!(
                "classifier has {} classes, tuples need {classes}",
                classifier.classes()
            )));
        }
        let warnings = histogram.warnings.clone();
        Ok(Self {
            classifier,
            histogram,
            warnings,
        })
    }
}

impl<C: TupleClassifier> FunctionNode for LearnedFgModel<C> {
    fn alphabet(&self) -> usize {
        self.histogram.alphabet()
    }

    fn memory(&self) -> usize {
        self.histogram.memory()
    }

    fn log_factor(&self, x: f64, prev: usize, sym: usize) -> f64 {
        let p = self.classifier.posteriors(&[x]);
        self.combine(&p[0], prev, sym)
    }

    fn log_factor_tables(&self, xs: &[f64]) -> Vec<Vec<f64>> {
        let m = self.alphabet();
        self.classifier
            .posteriors(xs)
            .iter()
            .map(|p| (0..p.len()).map(|t| self.combine(p, t / m, t % m)).collect())
            .collect()
    }
}

impl<C: TupleClassifier> LearnedFgModel<C> {
    fn combine(&self, posterior: &[f64], prev: usize, sym: usize) -> f64 {
        let t = prev * self.alphabet() + sym;
        posterior[t].max(f64::MIN_POSITIVE).ln() - self.histogram.tuple_marginal[t].ln()
            + self.histogram.transitions[prev][sym].ln()
    }
}

impl LearnedFgModel<MlpClassifier> {
    /// Writes `histogram.csv` and `classifier.ckpt` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), FgError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("histogram.csv"), self.histogram.to_csv())?;
        checkpoint::save(&dir.join("classifier.ckpt"), &self.classifier.to_params())?;
        Ok(())
    }

    pub fn load(dir: &Path, alphabet: usize, memory: usize, hidden: &[usize]) -> Result<Self, FgError> {
        let csv = std::fs::read_to_string(dir.join("histogram.csv"))?;
        let histogram = TransitionHistogram::from_csv(&csv, alphabet, memory)?;
        let params = checkpoint::load(&dir.join("classifier.ckpt"))?;
        let classifier = MlpClassifier::from_params(alphabet.pow(memory as u32 + 1), hidden, params)?;
        Self::new(classifier, histogram)
    }
}

/// Runs sum-product with the learned node.
pub fn learned_fg_detect<C: TupleClassifier>(
    xs: &[f64],
    model: &LearnedFgModel<C>,
    initial: Option<&[usize]>,
) -> Result<Vec<usize>, FgError> {
    sp_map_detect(xs, model, initial)
}

impl<C: TupleClassifier> SequenceDetector for LearnedFgModel<C> {
    fn detect(&self, x: &[f64], initial: Option<&[usize]>) -> Result<Vec<usize>, FgError> {
        learned_fg_detect(x, self, initial)
    }

    fn name(&self) -> &str {
        "learned-fg"
    }
}

impl SequenceDetector for AnalyticNode {
    fn detect(&self, x: &[f64], initial: Option<&[usize]>) -> Result<Vec<usize>, FgError> {
        sp_map_detect(x, self, initial)
    }

    fn name(&self) -> &str {
        "sp"
    }
}

/// `(x_i, tuple index of (s_{i-J}, …, s_i))` for every index of a sample,
/// using the known initial window for the first `J` tuples.
pub fn training_pairs(sample: &MarkovSample, alphabet: usize, memory: usize) -> (Vec<f64>, Vec<usize>) {
    let full = full_labels(sample);
    let tuples = full
        .windows(memory + 1)
        .map(|w| w.iter().fold(0, |acc, &s| acc * alphabet + s))
        .collect();
    (sample.x.clone(), tuples)
}

/// Initial window followed by the labels.
pub fn full_labels(sample: &MarkovSample) -> Vec<usize> {
    sample.initial.iter().chain(&sample.labels).copied().collect()
}

/// Trains the tuple classifier on cross-entropy and assembles the learned
/// node with the given histograms.
pub fn learn_function_node(
    xs: &[f64],
    tuples: &[usize],
    histogram: TransitionHistogram,
    config: &LearnedFgConfig,
) -> Result<(LearnedFgModel<MlpClassifier>, Vec<f64>), FgError> {
    if xs.is_empty() || xs.len() != tuples.len() {
        return Err(FgError::EmptyInput);
    }
    let classes = histogram.alphabet().pow(histogram.memory() as u32 + 1);
    if let Some(&bad) = tuples.iter().find(|&&t| t >= classes) {
        return Err(FgError::InvalidConfig(format!("tuple index {bad} ≥ {classes}")));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let scale = if var > 0.0 { var.sqrt() } else { 1.0 };

    let mut rng = seeded(config.seed);
    let mlp = classifier_mlp(classes, &config.hidden);
    let init = mlp.init_params(&mut rng);
    let mut g = Graph::new();
    let x = g.input("x");
    let y = g.input("y");
    let p = mlp.build_softmax(&mut g, x, &init);
    let loss = g.cross_entropy(p, y);
    g.set_output(loss);
    let data = mbdl_autodiff::bindings([
        ("x", Tensor::matrix(xs.len(), 1, xs.iter().map(|v| (v - mean) / scale).collect())),
        ("y", one_hot(tuples, classes)),
    ]);
    let mut opt = Optimizer::new(config.optimizer);
    let fit_cfg = FitConfig {
        epochs: config.epochs,
        batch_size: config.batch_size,
    };
    let losses = fit(&mut g, &data, fit_cfg, &mut opt, &mut rng)?;

    let classifier = MlpClassifier {
        mlp,
        params: g.params().clone(),
        mean,
        scale,
    };
    let mut model = LearnedFgModel::new(classifier, histogram)?;
    let mut seen = vec![false; classes];
    tuples.iter().for_each(|&t| seen[t] = true);
    let missing = seen.iter().filter(|s| !**s).count();
    if missing > 0 {
        model.warnings.push(format!("{missing} of {classes} tuple classes absent from training labels"));
    }
    Ok((model, losses))
}
