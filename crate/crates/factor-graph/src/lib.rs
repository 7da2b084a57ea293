//! Symbol detection over stationary finite-memory channels as exact
//! sum-product on a chain factor graph.
//!
//! The state at index `i` is the window `s̄_i = (s_{i-J+1}, …, s_i)`, stored
//! as a mixed-radix index with the most recent symbol least significant (the
//! convention of [`mbdl_sim::MarkovSequenceModel`]). A function node
//! `f(x_i, s̄_i, s̄_{i-1})` is nonzero only when `s̄_i` is `s̄_{i-1}` shifted by
//! one symbol, so nodes are evaluated on `(s̄_{i-1}, s_i)` pairs.

pub mod brute;
pub mod error;
pub mod histogram;
pub mod learned;
pub mod node;
pub mod sp;

pub use brute::brute_force_map;
pub use error::FgError;
pub use histogram::{learn_transition_histogram, TransitionHistogram};
pub use learned::{
    full_labels, learn_function_node, learned_fg_detect, training_pairs, LearnedFgConfig, LearnedFgModel,
    MlpClassifier, TupleClassifier,
};
pub use node::{AnalyticNode, FunctionNode};
pub use sp::{sp_map_detect, sp_posteriors, MessageTable};

/// Sequence detectors share this contract so experiment code can treat them
/// uniformly.
pub trait SequenceDetector: Send + Sync {
    /// `initial` is the window `s̄_0` when known to the receiver.
    fn detect(&self, x: &[f64], initial: Option<&[usize]>) -> Result<Vec<usize>, FgError>;
    fn name(&self) -> &str;
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in v.iter().enumerate() {
        if p > v[best] {
            best = i;
        }
    }
    best
}
