//! Speed-accuracy curves, their AUC, calibration diagnostics and report export.

mod curve;
mod diagnostics;
mod report;

pub use curve::{
    auc, naive_ratio_curve, routed_point, sampled_ratio_curve, speed_accuracy_curve, speed_accuracy_curve_with_overhead,
    Curve, CurvePoint, StrategyKind, DEFAULT_GRID_SIZE,
};
pub use diagnostics::{accuracy_above, bucket_accuracy, cumulative_lstm_usage, Bucket, BucketHistogram};
pub use report::{
    export_report, read_curve_csv, round_sig, write_curve_csv, ActivationRow, Report, SplitSummary, StrategyResult,
    CSV_SIGNIFICANT_DIGITS, INTERPOLATION,
};

use std::path::PathBuf;

use thiserror::Error;

use crate::cascade::CascadeError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("misaligned inputs: {0}")]
    Alignment(String),
    #[error("the decision-network strategy needs decision probabilities")]
    MissingDecisionProbs,
    #[error("degenerate curve: {0}")]
    DegenerateCurve(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
}

impl From<CascadeError> for EvalError {
    fn from(e: CascadeError) -> Self {
        match e {
            CascadeError::Alignment(m) => EvalError::Alignment(m),
            CascadeError::Parameter(m) => EvalError::Parameter(m),
            CascadeError::MissingInput(_) => EvalError::MissingDecisionProbs,
        }
    }
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Predicted class; ties go to class 0.
pub fn argmax(probs: &[f64; 2]) -> usize {
    usize::from(probs[1] > probs[0])
}

/// Both classifiers' outputs (and optionally the decision network's) on one
/// evaluation set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPredictions {
    pub gold: Vec<usize>,
    pub bow_probs: Vec<[f64; 2]>,
    pub lstm_probs: Vec<[f64; 2]>,
    pub decision_probs: Option<Vec<f64>>,
}

impl EvalPredictions {
    pub fn new(gold: Vec<usize>, bow_probs: Vec<[f64; 2]>, lstm_probs: Vec<[f64; 2]>) -> Result<Self> {
        if gold.is_empty() {
            return Err(EvalError::Alignment("no evaluation examples".into()));
        }
        if bow_probs.len() != gold.len() || lstm_probs.len() != gold.len() {
            return Err(EvalError::Alignment(format!(
                "{} gold labels, {} BoW outputs, {} LSTM outputs",
                gold.len(),
                bow_probs.len(),
                lstm_probs.len()
            )));
        }
        Ok(Self {
            gold,
            bow_probs,
            lstm_probs,
            decision_probs: None,
        })
    }

    pub fn with_decision_probs(mut self, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != self.gold.len() {
            return Err(EvalError::Alignment(format!(
                "{} decision probabilities for {} examples",
                probs.len(),
                self.gold.len()
            )));
        }
        self.decision_probs = Some(probs);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.gold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gold.is_empty()
    }

    pub fn bow_pred(&self, i: usize) -> usize {
        argmax(&self.bow_probs[i])
    }

    pub fn lstm_pred(&self, i: usize) -> usize {
        argmax(&self.lstm_probs[i])
    }

    pub fn bow_max_prob(&self, i: usize) -> f64 {
        self.bow_probs[i][0].max(self.bow_probs[i][1])
    }

    pub fn bow_max_probs(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.bow_max_prob(i)).collect()
    }

    pub fn bow_correct(&self) -> Vec<bool> {
        (0..self.len()).map(|i| self.bow_pred(i) == self.gold[i]).collect()
    }

    pub fn lstm_correct(&self) -> Vec<bool> {
        (0..self.len()).map(|i| self.lstm_pred(i) == self.gold[i]).collect()
    }

    pub fn bow_preds(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.bow_pred(i)).collect()
    }

    pub fn lstm_preds(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.lstm_pred(i)).collect()
    }

    pub fn bow_accuracy(&self) -> f64 {
        fraction(&self.bow_correct())
    }

    pub fn lstm_accuracy(&self) -> f64 {
        fraction(&self.lstm_correct())
    }
}

fn fraction(flags: &[bool]) -> f64 {
    flags.iter().filter(|&&c| c).count() as f64 / flags.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_go_to_negative() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.4, 0.6]), 1);
    }

    #[test]
    fn misaligned_predictions_are_rejected() {
        assert!(matches!(
            EvalPredictions::new(vec![0, 1], vec![[0.5, 0.5]], vec![[0.5, 0.5]; 2]),
            Err(EvalError::Alignment(_))
        ));
        let p = EvalPredictions::new(vec![0], vec![[0.5, 0.5]], vec![[0.5, 0.5]]).unwrap();
        assert!(matches!(p.with_decision_probs(vec![]), Err(EvalError::Alignment(_))));
    }

    #[test]
    fn accuracies() {
        let p = EvalPredictions::new(
            vec![0, 1, 1, 0],
            vec![[0.9, 0.1], [0.7, 0.3], [0.2, 0.8], [0.6, 0.4]],
            vec![[0.9, 0.1], [0.1, 0.9], [0.2, 0.8], [0.4, 0.6]],
        )
        .unwrap();
        assert_eq!(p.bow_accuracy(), 0.75);
        assert_eq!(p.lstm_accuracy(), 0.75);
        assert_eq!(p.bow_max_probs(), vec![0.9, 0.7, 0.8, 0.6]);
    }
}
