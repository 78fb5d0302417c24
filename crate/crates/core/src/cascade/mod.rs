//! Routing between the cheap and the expensive classifier, the cost and
//! expected-accuracy formulas behind the speed-accuracy benchmark, and the
//! end-to-end training pipeline.

mod pipeline;

pub use pipeline::{
    evaluate_models, load_checkpoints, prepare_data, run_pipeline, run_prepared, save_checkpoints, DataSource,
    DecisionTrunk, PipelineConfig, PipelineError, PipelineOutput, PreparedData, RunLog, SeedSet, Stage, StageError,
    TrainedModels, TreebankPaths, BOW_CHECKPOINT, CHECKPOINT_DIR, DECISION_CHECKPOINT, INCOMPLETE_MARKER,
    LSTM_CHECKPOINT, RUN_LOG,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::Rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CascadeError {
    #[error("misaligned inputs: {0}")]
    Alignment(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("missing input: {0}")]
    MissingInput(String),
}

pub type Result<T> = std::result::Result<T, CascadeError>;

/// Per-sample cost, in milliseconds, of each classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    pub c_bow: f64,
    pub c_lstm: f64,
}

impl Default for CostModel {
    /// Batch-64 GPU timings reported for the reference models.
    fn default() -> Self {
        Self {
            c_bow: 0.16,
            c_lstm: 1.36,
        }
    }
}

impl CostModel {
    pub fn new(c_bow: f64, c_lstm: f64) -> Result<Self> {
        let m = Self { c_bow, c_lstm };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_bow > 0.0 && self.c_bow < self.c_lstm && self.c_lstm.is_finite()) {
            return Err(CascadeError::Parameter(format!(
                "costs must satisfy 0 < c_bow < c_lstm, got ({}, {})",
                self.c_bow, self.c_lstm
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    Bow,
    Lstm,
}

/// A routing policy with its knob.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Send a fraction `alpha` of inputs to the BoW at random.
    NaiveRatio { alpha: f64 },
    /// Keep the BoW answer when its max probability reaches `tau`.
    ProbThreshold { tau: f64 },
    /// Run the LSTM when the decision network's LSTM probability exceeds `tau_d`.
    DecisionNet { tau_d: f64 },
}

impl Strategy {
    pub fn validate(&self) -> Result<()> {
        let (name, value, lo) = match *self {
            Strategy::NaiveRatio { alpha } => ("alpha", alpha, 0.0),
            Strategy::ProbThreshold { tau } => ("tau", tau, 0.5),
            Strategy::DecisionNet { tau_d } => ("tau_d", tau_d, 0.0),
        };
        if !(lo..=1.0).contains(&value) {
            return Err(CascadeError::Parameter(format!("{name} = {value} not in [{lo}, 1]")));
        }
        Ok(())
    }
}

/// Picks a classifier for one input. Ties at `tau` go to the BoW.
pub fn route(strategy: &Strategy, bow_max_prob: f64, decision_prob: Option<f64>, rng: &mut Rng) -> Result<Choice> {
    let choice = match *strategy {
        Strategy::ProbThreshold { tau } => {
            if bow_max_prob >= tau {
                Choice::Bow
            } else {
                Choice::Lstm
            }
        }
        Strategy::DecisionNet { tau_d } => {
            let p = decision_prob
                .ok_or_else(|| CascadeError::MissingInput("decision probability for the decision-network strategy".into()))?;
            if p > tau_d {
                Choice::Lstm
            } else {
                Choice::Bow
            }
        }
        Strategy::NaiveRatio { alpha } => {
            if rng.bernoulli(alpha) {
                Choice::Bow
            } else {
                Choice::Lstm
            }
        }
    };
    Ok(choice)
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(CascadeError::Parameter(format!("{name} = {v} not in [0, 1]")));
    }
    Ok(())
}

/// Mean accuracy when a fraction `alpha` of inputs goes to the BoW at random:
/// `alpha·a_bow + (1-alpha)·a_lstm`.
pub fn expected_accuracy(alpha: f64, a_bow: f64, a_lstm: f64) -> Result<f64> {
    check_unit("alpha", alpha)?;
    check_unit("a_bow", a_bow)?;
    check_unit("a_lstm", a_lstm)?;
    Ok(alpha * a_bow + (1.0 - alpha) * a_lstm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    /// The BoW runs on every input; the LSTM on the `1-alpha` it rejects.
    Strategy,
    /// Each input runs exactly one model.
    Ratio,
}

/// Average per-sample cost in milliseconds.
pub fn compute_cost(kind: CostKind, alpha: f64, costs: &CostModel) -> f64 {
    match kind {
        CostKind::Strategy => costs.c_bow + (1.0 - alpha) * costs.c_lstm,
        CostKind::Ratio => alpha * costs.c_bow + (1.0 - alpha) * costs.c_lstm,
    }
}

/// Joint correctness of the two classifiers, as fractions of all inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// Both correct.
    pub tt: f64,
    /// Only the BoW correct.
    pub tf: f64,
    /// Only the LSTM correct.
    pub ft: f64,
    /// Neither correct.
    pub ff: f64,
}

impl ConfusionMatrix {
    pub fn bow_accuracy(&self) -> f64 {
        self.tt + self.tf
    }

    pub fn lstm_accuracy(&self) -> f64 {
        self.tt + self.ft
    }
}

fn check_aligned(bow: usize, lstm: usize, gold: usize) -> Result<()> {
    if bow != gold || lstm != gold {
        return Err(CascadeError::Alignment(format!(
            "{bow} BoW predictions, {lstm} LSTM predictions, {gold} gold labels"
        )));
    }
    Ok(())
}

pub fn confusion(bow_preds: &[usize], lstm_preds: &[usize], gold: &[usize]) -> Result<ConfusionMatrix> {
    check_aligned(bow_preds.len(), lstm_preds.len(), gold.len())?;
    if gold.is_empty() {
        return Err(CascadeError::Alignment("no examples".into()));
    }
    let mut counts = [0usize; 4];
    for ((b, l), g) in bow_preds.iter().zip(lstm_preds).zip(gold) {
        let cell = match (b == g, l == g) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        };
        counts[cell] += 1;
    }
    let n = gold.len() as f64;
    Ok(ConfusionMatrix {
        tt: counts[0] as f64 / n,
        tf: counts[1] as f64 / n,
        ft: counts[2] as f64 / n,
        ff: counts[3] as f64 / n,
    })
}

/// 1 ("use the LSTM") exactly when the BoW is wrong and the LSTM right.
pub fn generate_decision_labels(bow_preds: &[usize], lstm_preds: &[usize], gold: &[usize]) -> Result<Vec<usize>> {
    check_aligned(bow_preds.len(), lstm_preds.len(), gold.len())?;
    Ok(bow_preds
        .iter()
        .zip(lstm_preds)
        .zip(gold)
        .map(|((b, l), g)| usize::from(b != g && l == g))
        .collect())
}
