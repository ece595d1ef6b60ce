//! Training objectives.
//!
//! The regression loss sorts the target tuples of each sample before the
//! pairwise squared error so the network never pays for predicting targets
//! in a different order than the labels.

use nalgebra::DMatrix;

use crate::error::{CoreError, Result};

/// Sort indices of `(theta, phi)` tuples by AoA ascending, AoD breaking ties.
/// `values` is laid out `[theta_1..theta_q, phi_1..phi_q]`.
fn tuple_order(values: &[f64], q: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| {
        (values[a], values[q + a])
            .partial_cmp(&(values[b], values[q + b]))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

/// Sorted mean-squared angle error for one sample. Both sides are sorted as
/// tuples, then the mean of the squared differences over all `2q` angle
/// slots is returned.
pub fn sorted_mse_loss(predictions: &[f64], truth: &[f64], q: usize) -> Result<f64> {
    if predictions.len() != 2 * q || truth.len() != 2 * q {
        return Err(CoreError::InvalidArgument(format!(
            "expected {} angle values, got {} predictions / {} truths",
            2 * q,
            predictions.len(),
            truth.len()
        )));
    }
    let po = tuple_order(predictions, q);
    let to = tuple_order(truth, q);
    let mut sum = 0.0;
    for slot in 0..q {
        let dt = predictions[po[slot]] - truth[to[slot]];
        let dp = predictions[q + po[slot]] - truth[q + to[slot]];
        sum += dt * dt + dp * dp;
    }
    Ok(sum / (2 * q) as f64)
}

/// Batch sorted MSE plus its gradient with respect to the predictions.
/// Columns are samples, rows are the `2q` angle slots.
pub fn sorted_mse_with_grad(
    predictions: &DMatrix<f64>,
    truth: &DMatrix<f64>,
) -> Result<(f64, DMatrix<f64>)> {
    if predictions.shape() != truth.shape() || !predictions.nrows().is_multiple_of(2) {
        return Err(CoreError::InvalidArgument(
            "prediction/truth shape mismatch".into(),
        ));
    }
    let q = predictions.nrows() / 2;
    let batch = predictions.ncols();
    let norm = 1.0 / (2 * q * batch) as f64;
    let mut grad = DMatrix::zeros(predictions.nrows(), batch);
    let mut loss = 0.0;
    for j in 0..batch {
        let p: Vec<f64> = predictions.column(j).iter().copied().collect();
        let t: Vec<f64> = truth.column(j).iter().copied().collect();
        let po = tuple_order(&p, q);
        let to = tuple_order(&t, q);
        for slot in 0..q {
            let dt = p[po[slot]] - t[to[slot]];
            let dp = p[q + po[slot]] - t[q + to[slot]];
            loss += (dt * dt + dp * dp) * norm;
            grad[(po[slot], j)] += 2.0 * dt * norm;
            grad[(q + po[slot], j)] += 2.0 * dp * norm;
        }
    }
    Ok((loss, grad))
}

/// Cross-entropy over class probabilities plus its gradient with respect to
/// the pre-softmax logits. `labels` are 1-based class indices.
pub fn cross_entropy_with_grad(
    probs: &DMatrix<f64>,
    labels: &[usize],
) -> Result<(f64, DMatrix<f64>)> {
    let batch = probs.ncols();
    if labels.len() != batch {
        return Err(CoreError::InvalidArgument("label count mismatch".into()));
    }
    let norm = 1.0 / batch as f64;
    let mut grad = probs.clone();
    let mut loss = 0.0;
    for (j, &label) in labels.iter().enumerate() {
        if label < 1 || label > probs.nrows() {
            return Err(CoreError::InvalidArgument(format!(
                "class label {label} outside 1..={}",
                probs.nrows()
            )));
        }
        let p = probs[(label - 1, j)].max(1e-300);
        loss -= p.ln() * norm;
        grad[(label - 1, j)] -= 1.0;
    }
    grad.scale_mut(norm);
    Ok((loss, grad))
}

/// Classification accuracy of argmax predictions against 1-based labels.
pub fn accuracy(probs: &DMatrix<f64>, labels: &[usize]) -> f64 {
    let mut hits = 0usize;
    for (j, &label) in labels.iter().enumerate() {
        let mut best = 0;
        for i in 1..probs.nrows() {
            if probs[(i, j)] > probs[(best, j)] {
                best = i;
            }
        }
        if best + 1 == label {
            hits += 1;
        }
    }
    hits as f64 / labels.len().max(1) as f64
}
