use super::{NnError, Result};

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Returns `(loss, probs)`. The gradient with respect to the logits is
/// `probs - onehot(label)`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(NnError::Index {
            index: label,
            len: logits.len(),
        });
    }
    let (top, max) = logits
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, z)| if z > acc.1 { (i, z) } else { acc });
    // the max term contributes exactly 1; ln_1p keeps tiny tails accurate
    let tail: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != top)
        .map(|(_, z)| (z - max).exp())
        .sum();
    let loss = max - logits[label] + tail.ln_1p();
    Ok((loss, softmax(logits)))
}

/// `probs - onehot(label)`.
pub fn cross_entropy_grad(probs: &[f64], label: usize) -> Vec<f64> {
    let mut g = probs.to_vec();
    g[label] -= 1.0;
    g
}
