//! Cross-entropy losses and their gradients.
//!
//! Probabilities are floored at `PROB_FLOOR` before logarithms so
//! degenerate runs surface as bad accuracy instead of NaNs.

use crate::kb::Label;

use super::model::{softmax, Classifier};
use super::WeakMatrix;

pub const PROB_FLOOR: f64 = 1e-12;

/// `-log g_y` on softmax outputs.
pub fn ce_loss(g: &[f64], y: Label) -> f64 {
    -g[y as usize].max(PROB_FLOOR).ln()
}

/// `d ce / d logits = g - e_y`.
pub fn ce_grad_logits(g: &[f64], y: Label) -> Vec<f64> {
    let mut grad = g.to_vec();
    grad[y as usize] -= 1.0;
    grad
}

/// Cross-entropy against a fixed target distribution `w` (entries summing
/// to one): `sum_j w_j * -log g_j`.
pub fn weighted_ce_loss(g: &[f64], w: &[f64]) -> f64 {
    g.iter().zip(w).map(|(&p, &wj)| -wj * p.max(PROB_FLOOR).ln()).sum()
}

/// `d / d logits = g - w` for probability weights.
pub fn weighted_ce_grad_logits(g: &[f64], w: &[f64]) -> Vec<f64> {
    g.iter().zip(w).map(|(&p, &wj)| p - wj).collect()
}

/// Sequence loss: mean cross-entropy of the classifier's softmax outputs
/// against one candidate labelling.
pub fn seq_loss(h: &Classifier, xs: &[Vec<f64>], labels: &[Label]) -> f64 {
    debug_assert_eq!(xs.len(), labels.len());
    let total: f64 = xs
        .iter()
        .zip(labels)
        .map(|(x, &y)| ce_loss(&softmax(&h.forward(x)), y))
        .sum();
    total / xs.len() as f64
}

/// `-log(column . g)`: cross-entropy of the matrix-mixed output against
/// the synthetic (concept, position) label behind `column`.
pub fn tl_loss_probs(g: &[f64], column: &[f64]) -> f64 {
    let mixed: f64 = g.iter().zip(column).map(|(&p, &q)| p * q).sum();
    -mixed.max(PROB_FLOOR).ln()
}

/// `d tl / d logits_i = g_i - g_i * column_i / (column . g)`.
pub fn tl_grad_logits(g: &[f64], column: &[f64]) -> Vec<f64> {
    let mixed: f64 = g.iter().zip(column).map(|(&p, &q)| p * q).sum();
    let mixed = mixed.max(PROB_FLOOR);
    g.iter().zip(column).map(|(&p, &q)| p - p * q / mixed).collect()
}

/// Matrix-mixed loss for one instance against one matrix column.
pub fn tl_loss(h: &Classifier, x: &[f64], column: usize, matrix: &WeakMatrix) -> f64 {
    tl_loss_probs(&softmax(&h.forward(x)), matrix.column(column))
}

/// Loss and parameter gradient of `ce_loss` at one instance.
pub fn ce_loss_grad_params(h: &Classifier, x: &[f64], y: Label) -> (f64, Vec<f64>) {
    let (logits, cache) = h.forward_cached(x);
    let g = softmax(&logits);
    let mut grad = vec![0.0; h.params().len()];
    h.backprop(x, &cache, &ce_grad_logits(&g, y), &mut grad);
    (ce_loss(&g, y), grad)
}

/// Loss and parameter gradient of `seq_loss` at one record.
pub fn seq_loss_grad_params(h: &Classifier, xs: &[Vec<f64>], labels: &[Label]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; h.params().len()];
    let mut loss = 0.0;
    let scale = 1.0 / xs.len() as f64;
    for (x, &y) in xs.iter().zip(labels) {
        let (logits, cache) = h.forward_cached(x);
        let g = softmax(&logits);
        loss += scale * ce_loss(&g, y);
        let mut dlogits = ce_grad_logits(&g, y);
        for v in &mut dlogits {
            *v *= scale;
        }
        h.backprop(x, &cache, &dlogits, &mut grad);
    }
    (loss, grad)
}

/// Loss and parameter gradient of `tl_loss` at one instance.
pub fn tl_loss_grad_params(
    h: &Classifier,
    x: &[f64],
    column: usize,
    matrix: &WeakMatrix,
) -> (f64, Vec<f64>) {
    let (logits, cache) = h.forward_cached(x);
    let g = softmax(&logits);
    let col = matrix.column(column);
    let mut grad = vec![0.0; h.params().len()];
    h.backprop(x, &cache, &tl_grad_logits(&g, col), &mut grad);
    (tl_loss_probs(&g, col), grad)
}
