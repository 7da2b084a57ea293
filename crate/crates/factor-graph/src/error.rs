use mbdl_autodiff::GraphError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FgError {
    #[error("empty observation sequence")]
    EmptySequence,
    #[error("all-zero message at index {index}: the observation is impossible under the node")]
    ZeroMessage { index: usize },
    #[error("exhaustive search over {candidates} sequences exceeds the limit of {limit}")]
    SearchTooLarge { candidates: u128, limit: u128 },
    #[error("no labelled symbols to learn from")]
    EmptyInput,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed histogram CSV: {0}")]
    Csv(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}
