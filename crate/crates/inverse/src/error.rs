use mbdl_autodiff::GraphError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InverseError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("non-finite iterate at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("no finite objective after {halvings} step halvings")]
    Overflow { halvings: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}
