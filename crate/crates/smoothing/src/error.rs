use mbdl_autodiff::GraphError;
use mbdl_sim::SimError;
use thiserror::Error;

use crate::augment::AugmentationNet;

#[derive(Debug, Error)]
pub enum SmoothingError {
    #[error("empty trajectory")]
    Empty,
    #[error("shape: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("smoother diverged with step size {eta} at iteration {iteration}")]
    Diverged { eta: f64, iteration: usize },
    #[error("batch MAP system is singular")]
    Singular,
    #[error("training diverged in epoch {epoch}")]
    TrainingDiverged {
        epoch: usize,
        /// Network at the end of the last finite epoch.
        checkpoint: Box<AugmentationNet>,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}
