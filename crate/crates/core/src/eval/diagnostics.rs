use serde::{Deserialize, Serialize};

use super::{EvalError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// `None` for an empty bin.
    pub accuracy: Option<f64>,
    /// Accuracy over every example with max probability at or above `lower`.
    pub cumulative_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketHistogram {
    pub bin_width: f64,
    pub buckets: Vec<Bucket>,
}

impl BucketHistogram {
    pub fn total(&self) -> usize {
        self.buckets.iter().map(|b| b.count).sum()
    }
}

fn check_aligned(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(EvalError::Alignment(format!("{a} probabilities, {b} correctness flags")));
    }
    Ok(())
}

/// Accuracy over examples with max probability `>= threshold`; `None` if there are none.
pub fn accuracy_above(max_probs: &[f64], correct: &[bool], threshold: f64) -> Result<Option<f64>> {
    check_aligned(max_probs.len(), correct.len())?;
    let (n, c) = max_probs
        .iter()
        .zip(correct)
        .filter(|(p, _)| **p >= threshold)
        .fold((0usize, 0usize), |(n, c), (_, ok)| (n + 1, c + usize::from(*ok)));
    Ok((n > 0).then(|| c as f64 / n as f64))
}

/// Bins over `[0.5, 1]`: the first is `[0.5, 0.5+w]`, the rest `(lo, lo+w]`.
pub fn bucket_accuracy(max_probs: &[f64], correct: &[bool], bin_width: f64) -> Result<BucketHistogram> {
    check_aligned(max_probs.len(), correct.len())?;
    if !(bin_width > 0.0 && bin_width <= 0.5) {
        return Err(EvalError::Parameter(format!("bin width {bin_width} not in (0, 0.5]")));
    }
    if let Some(p) = max_probs.iter().find(|p| !(0.5..=1.0).contains(*p)) {
        return Err(EvalError::Parameter(format!("max probability {p} outside [0.5, 1]")));
    }
    let n_bins = ((0.5 / bin_width) - 1e-9).ceil() as usize;
    let upper = |k: usize| if k + 1 == n_bins { 1.0 } else { 0.5 + (k + 1) as f64 * bin_width };
    let mut counts = vec![(0usize, 0usize); n_bins];
    for (&p, &ok) in max_probs.iter().zip(correct) {
        let k = (0..n_bins).find(|&k| p <= upper(k)).unwrap_or(n_bins - 1);
        counts[k].0 += 1;
        counts[k].1 += usize::from(ok);
    }
    let buckets = (0..n_bins)
        .map(|k| {
            let lower = 0.5 + k as f64 * bin_width;
            let (count, hits) = counts[k];
            Ok(Bucket {
                lower,
                upper: upper(k),
                count,
                accuracy: (count > 0).then(|| hits as f64 / count as f64),
                cumulative_accuracy: accuracy_above(max_probs, correct, lower)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BucketHistogram { bin_width, buckets })
}

/// Fraction of examples with max probability below each threshold.
pub fn cumulative_lstm_usage(max_probs: &[f64], thresholds: &[f64]) -> Vec<f64> {
    let mut sorted = max_probs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len().max(1) as f64;
    thresholds
        .iter()
        .map(|&t| sorted.partition_point(|&p| p < t) as f64 / n)
        .collect()
}
