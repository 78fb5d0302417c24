//! The bag-of-words classifier, the bi-LSTM classifier, the decision
//! network over the BoW's last hidden layer, their training loop, and
//! checkpoint files.

mod bow;
mod checkpoint;
mod decision;
mod lstm;
mod suite;
mod train;

pub use bow::{bow_forward, BowClassifier, BowOutput, BowTrunk};
pub use checkpoint::{Checkpoint, ModelKind, FORMAT_VERSION, MAGIC};
pub use decision::{decision_forward, DecisionNet, DECISION_LSTM_CLASS};
pub use lstm::{lstm_forward, LstmClassifier};
pub use suite::{gradient_check_suite, GradCheckResult};
pub use train::{
    accuracy, fit, mean_loss, predict_all, train_classifier, train_decision_net, DecisionValidation, EpochRecord,
    SelectionMetric, TrainConfig, TrainHistory, MAX_EPOCHS,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Example;
use crate::nn::{GradCheck, Mode, NnError, Parameter, Rng};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("empty input sequence")]
    EmptyInput,
    #[error("training diverged in epoch {epoch}: {message}")]
    Diverged { epoch: usize, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint integrity check failed: {0}")]
    Integrity(String),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Eval(#[from] Box<crate::eval::EvalError>),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Layer widths shared by the three networks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelDims {
    pub embedding_dim: usize,
    pub bow_hidden: usize,
    pub lstm_projection: usize,
    pub lstm_hidden: usize,
    pub lstm_mlp_hidden: usize,
    pub decision_hidden: usize,
    pub dropout: f64,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            embedding_dim: 16,
            bow_hidden: 64,
            lstm_projection: 64,
            lstm_hidden: 64,
            lstm_mlp_hidden: 64,
            decision_hidden: 32,
            dropout: 0.5,
        }
    }
}

/// A two-class network that can be fitted by [`fit`].
pub trait Trainable: Clone + Send + Sync {
    /// Eval-mode class probabilities.
    fn probs(&self, tokens: &[usize]) -> Result<[f64; 2]>;

    /// Cross-entropy on `example`, accumulating gradients into the
    /// trainable parameters.
    fn accumulate(&mut self, example: &Example, mode: Mode, rng: &mut Rng) -> Result<f64>;

    /// Eval-mode cross-entropy, no gradients.
    fn loss(&self, example: &Example) -> Result<f64>;

    fn trainable_parameters_mut(&mut self) -> Vec<&mut Parameter>;

    /// Every parameter, frozen ones included, in checkpoint order.
    fn parameters(&self) -> Vec<&Parameter>;
}

/// Summed eval-mode loss of a model over fixed examples, for gradient
/// checking the trainable parameters end to end.
pub struct ModelGradCheck<M> {
    pub model: M,
    pub examples: Vec<Example>,
}

impl<M: Trainable> GradCheck for ModelGradCheck<M> {
    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        self.model.trainable_parameters_mut()
    }

    fn loss(&self) -> f64 {
        self.examples
            .iter()
            .map(|e| self.model.loss(e).expect("valid example"))
            .sum()
    }

    fn loss_and_grad(&mut self) -> f64 {
        let mut rng = Rng::new(0);
        let mut total = 0.0;
        for e in &self.examples {
            total += self.model.accumulate(e, Mode::Eval, &mut rng).expect("valid example");
        }
        total
    }
}

pub(crate) fn ensure_tokens(tokens: &[usize]) -> Result<()> {
    if tokens.is_empty() {
        Err(ModelError::EmptyInput)
    } else {
        Ok(())
    }
}

pub(crate) fn as_pair(v: &[f64]) -> [f64; 2] {
    [v[0], v[1]]
}

/// Adds the pooled-embedding gradient back into the rows used.
pub(crate) fn scatter_mean_grad(grad: &mut crate::nn::Tensor, tokens: &[usize], dpooled: &[f64]) {
    let scale = 1.0 / tokens.len() as f64;
    for &t in tokens {
        grad.row_mut(t).iter_mut().zip(dpooled).for_each(|(g, d)| *g += d * scale);
    }
}
