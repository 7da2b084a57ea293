//! Eager loss functions and their graph-building counterparts.

use crate::error::GraphError;
use crate::graph::{Graph, NodeId, PROB_FLOOR};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum LossKind {
    CrossEntropy,
    Mse,
    /// One weight per layer; `predictions[q]` is compared with the target.
    WeightedL2(Vec<f64>),
}

/// Evaluates `kind` on already-computed tensors. `Mse` and `CrossEntropy`
/// use only the first prediction.
pub fn loss(kind: &LossKind, predictions: &[Tensor], targets: &Tensor) -> Result<f64, GraphError> {
    let first = predictions.first().ok_or_else(|| GraphError::InvalidShape {
        shape: Vec::new(),
        reason: "no predictions".into(),
    })?;
    match kind {
        LossKind::Mse => mse(first, targets),
        LossKind::CrossEntropy => cross_entropy(first, targets),
        LossKind::WeightedL2(weights) => weighted_l2_per_layer(weights, predictions, targets),
    }
}

fn check_same(pred: &Tensor, target: &Tensor) -> Result<(), GraphError> {
    if pred.shape() != target.shape() {
        return Err(GraphError::ShapeMismatch {
            node: "loss".into(),
            detail: format!("{:?} vs {:?}", pred.shape(), target.shape()),
        });
    }
    Ok(())
}

fn batch(t: &Tensor) -> usize {
    match t.rank() {
        0 => 1,
        1 => t.len(),
        _ => t.shape()[0],
    }
}

/// `(1/B) Σ_b ||pred_b - target_b||²`. A vector counts as a batch of scalars.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<f64, GraphError> {
    check_same(pred, target)?;
    let total: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(total / batch(pred) as f64)
}

/// `-(1/B) Σ target · ln(clamp(prob, 1e-12, 1))` with one-hot targets; rows
/// of a matrix are samples, a vector is a single sample.
pub fn cross_entropy(probs: &Tensor, one_hot: &Tensor) -> Result<f64, GraphError> {
    check_same(probs, one_hot)?;
    if let Some(&bad) = probs.data().iter().find(|&&v| !(0.0..=1.0).contains(&v)) {
        return Err(GraphError::InvalidProbability {
            node: "loss".into(),
            value: bad,
        });
    }
    let total: f64 = probs
        .data()
        .iter()
        .zip(one_hot.data())
        .map(|(&q, &y)| if y == 0.0 { 0.0 } else { -y * q.max(PROB_FLOOR).ln() })
        .sum();
    Ok(total / probs.rows() as f64)
}

/// Cross entropy with integer class labels, one per row.
pub fn cross_entropy_classes(probs: &Tensor, classes: &[usize]) -> Result<f64, GraphError> {
    let one_hot = one_hot(classes, probs.cols());
    let one_hot = if probs.rank() == 1 {
        one_hot.reshaped(vec![probs.cols()])?
    } else {
        one_hot
    };
    cross_entropy(probs, &one_hot)
}

/// `Σ_q w_q · mse(pred_q, target)`.
pub fn weighted_l2_per_layer(
    weights: &[f64],
    predictions: &[Tensor],
    target: &Tensor,
) -> Result<f64, GraphError> {
    if weights.len() != predictions.len() {
        return Err(GraphError::ShapeMismatch {
            node: "loss".into(),
            detail: format!("{} weights for {} layers", weights.len(), predictions.len()),
        });
    }
    let mut total = 0.0;
    for (w, p) in weights.iter().zip(predictions) {
        total += w * mse(p, target)?;
    }
    Ok(total)
}

/// `[n, classes]` one-hot matrix.
pub fn one_hot(classes: &[usize], n_classes: usize) -> Tensor {
    let mut data = vec![0.0; classes.len() * n_classes];
    for (i, &c) in classes.iter().enumerate() {
        assert!(c < n_classes, "class {c} out of range");
        data[i * n_classes + c] = 1.0;
    }
    Tensor::matrix(classes.len(), n_classes, data)
}

/// `log(q + 1)` for `q = 1..=layers`, so every layer carries weight.
pub fn log_layer_weights(layers: usize) -> Vec<f64> {
    (1..=layers).map(|q| ((q + 1) as f64).ln()).collect()
}

/// `q / Q` for `q = 1..=Q`.
pub fn linear_layer_weights(layers: usize) -> Vec<f64> {
    (1..=layers).map(|q| q as f64 / layers as f64).collect()
}

/// Graph node computing `Σ_q w_q · mse(layer_q, target)`.
pub fn weighted_l2_node(g: &mut Graph, layers: &[NodeId], target: NodeId, weights: &[f64]) -> NodeId {
    assert_eq!(layers.len(), weights.len(), "one weight per layer");
    let mut total: Option<NodeId> = None;
    for (&layer, &w) in layers.iter().zip(weights) {
        let e = g.mse(layer, target);
        let term = g.scale(e, w);
        total = Some(match total {
            Some(t) => g.add(t, term),
            None => term,
        });
    }
    total.expect("at least one layer")
}
