//! Reverse-mode automatic differentiation over dense row-major `f64` tensors.
//!
//! A [`Graph`] records operations on named inputs and trainable parameters.
//! [`Graph::eval`] runs the forward pass and caches every intermediate value;
//! [`Graph::backward`] returns the gradient of a scalar root with respect to
//! every parameter.
//!
//! ```
//! use mbdl_autodiff::{bindings, Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let theta = g.param("theta", Tensor::scalar(3.0));
//! let x = g.input("x");
//! let y = g.mul(theta, x);
//! g.mul(y, y);
//! g.eval(&bindings([("x", Tensor::scalar(2.0))])).unwrap();
//! assert_eq!(g.backward().unwrap()["theta"].item(), 2.0 * 3.0 * 4.0);
//! ```

pub mod activation;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod loss;
pub mod nn;
pub mod optim;
pub mod tensor;

pub use activation::{apply_activation, sigmoid, soft_threshold, softmax, softmax_slice, Activation};
pub use error::GraphError;
pub use graph::{bindings, toeplitz_matrix, Bindings, Graph, NodeId, Op, PROB_FLOOR};
pub use loss::{loss, LossKind};
pub use nn::{fit, gather_rows, train_step, FitConfig, Mlp};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use tensor::Tensor;

/// Parameter maps are ordered by name so iteration order, and hence every
/// floating-point reduction over parameters, is reproducible.
pub type Params = std::collections::BTreeMap<String, Tensor>;
