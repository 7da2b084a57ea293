use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },
    #[error("shape mismatch at node {node}: {detail}")]
    ShapeMismatch { node: String, detail: String },
    #[error("input `{0}` is not bound")]
    UnboundInput(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("non-finite value produced at node {0}")]
    NonFinite(String),
    #[error("node {0} has not been evaluated")]
    NotEvaluated(String),
    #[error("backward needs a scalar root, node {node} has shape {shape:?}")]
    NonScalarRoot { node: String, shape: Vec<usize> },
    #[error("probability {value} outside [0, 1] at node {node}")]
    InvalidProbability { node: String, value: f64 },
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("training diverged in epoch {epoch}")]
    Diverged {
        epoch: usize,
        /// Parameters at the end of the last epoch with a finite loss.
        checkpoint: Box<std::collections::BTreeMap<String, crate::tensor::Tensor>>,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
