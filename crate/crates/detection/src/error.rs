use mbdl_autodiff::GraphError;
use mbdl_sim::SimError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DetectionError {
    #[error("exhaustive search over {candidates} candidates exceeds the limit of {limit}")]
    SearchTooLarge { candidates: u128, limit: u128 },
    #[error("covariance for user {user} is not positive definite")]
    SingularCovariance { user: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Sim(#[from] SimError),
}
