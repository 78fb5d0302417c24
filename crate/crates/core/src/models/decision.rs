use crate::data::Example;
use crate::nn::{cross_entropy_grad, dropout, softmax, softmax_cross_entropy, Activation, Dense, Mode, Parameter, Rng};

use super::{as_pair, BowClassifier, BowTrunk, ModelDims, Result, Trainable};

/// Class index meaning "run the LSTM".
pub const DECISION_LSTM_CLASS: usize = 1;

/// Two-layer head over a frozen copy of a BoW classifier's trunk.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionNet {
    pub trunk: BowTrunk,
    pub head_hidden: Dense,
    pub head_output: Dense,
    pub dropout: f64,
}

impl DecisionNet {
    /// Copies everything but the output layer of `bow`.
    pub fn from_bow(bow: &BowClassifier, dims: &ModelDims, rng: &mut Rng) -> Self {
        let trunk = bow.trunk.clone();
        let width = trunk.hidden.n_out();
        Self {
            trunk,
            head_hidden: Dense::new("head_hidden", width, dims.decision_hidden, Activation::Relu, rng),
            head_output: Dense::new("head_output", dims.decision_hidden, 2, Activation::Identity, rng),
            dropout: dims.dropout,
        }
    }

    /// Probability that the LSTM should handle `tokens`.
    pub fn p_lstm(&self, tokens: &[usize]) -> Result<f64> {
        Ok(self.probs(tokens)?[DECISION_LSTM_CLASS])
    }

    fn head_logits(&self, last_hidden: &[f64]) -> Result<Vec<f64>> {
        let h = self.head_hidden.forward(last_hidden)?;
        Ok(self.head_output.forward(&h)?)
    }
}

/// `softmax(head(trunk(tokens)))[LSTM]`; the trunk never applies dropout.
pub fn decision_forward(net: &DecisionNet, tokens: &[usize], mode: Mode, rng: &mut Rng) -> Result<f64> {
    let last_hidden = net.trunk.last_hidden(tokens)?;
    let h = net.head_hidden.forward(&last_hidden)?;
    let (dropped, _) = dropout(&h, net.dropout, mode, rng)?;
    let logits = net.head_output.forward(&dropped)?;
    Ok(softmax(&logits)[DECISION_LSTM_CLASS])
}

impl Trainable for DecisionNet {
    fn probs(&self, tokens: &[usize]) -> Result<[f64; 2]> {
        let last_hidden = self.trunk.last_hidden(tokens)?;
        Ok(as_pair(&softmax(&self.head_logits(&last_hidden)?)))
    }

    fn accumulate(&mut self, example: &Example, mode: Mode, rng: &mut Rng) -> Result<f64> {
        let last_hidden = self.trunk.last_hidden(&example.tokens)?;
        let h = self.head_hidden.forward(&last_hidden)?;
        let (dropped, mask) = dropout(&h, self.dropout, mode, rng)?;
        let logits = self.head_output.forward(&dropped)?;
        let (loss, probs) = softmax_cross_entropy(&logits, example.label)?;
        let dlogits = cross_entropy_grad(&probs, example.label);
        let ddropped = self.head_output.backward(&dropped, &logits, &dlogits);
        let dh = mask.backward(&ddropped);
        self.head_hidden.backward(&last_hidden, &h, &dh);
        Ok(loss)
    }

    fn loss(&self, example: &Example) -> Result<f64> {
        let last_hidden = self.trunk.last_hidden(&example.tokens)?;
        Ok(softmax_cross_entropy(&self.head_logits(&last_hidden)?, example.label)?.0)
    }

    fn trainable_parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = self.head_hidden.parameters_mut();
        out.extend(self.head_output.parameters_mut());
        out
    }

    fn parameters(&self) -> Vec<&Parameter> {
        let mut out = self.trunk.parameters();
        out.extend(self.head_hidden.parameters());
        out.extend(self.head_output.parameters());
        out
    }
}
