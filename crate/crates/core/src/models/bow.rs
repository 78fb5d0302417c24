use crate::data::{EmbeddingTable, Example};
use crate::nn::{cross_entropy_grad, dropout, softmax, softmax_cross_entropy, Activation, Dense, Mode, Parameter, Rng};

use super::{as_pair, ensure_tokens, scatter_mean_grad, ModelDims, Result, Trainable};

/// Averaged embeddings followed by one relu layer; shared between the BoW
/// classifier and the decision network.
#[derive(Debug, Clone, PartialEq)]
pub struct BowTrunk {
    pub embeddings: EmbeddingTable,
    pub hidden: Dense,
}

impl BowTrunk {
    pub fn pool(&self, tokens: &[usize]) -> Result<Vec<f64>> {
        ensure_tokens(tokens)?;
        let dim = self.embeddings.dim();
        let mut pooled = vec![0.0; dim];
        for &t in tokens {
            pooled.iter_mut().zip(self.embeddings.row(t)).for_each(|(p, e)| *p += e);
        }
        let n = tokens.len() as f64;
        pooled.iter_mut().for_each(|p| *p /= n);
        Ok(pooled)
    }

    /// `(pooled, last_hidden)`.
    pub fn forward(&self, tokens: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
        let pooled = self.pool(tokens)?;
        let hidden = self.hidden.forward(&pooled)?;
        Ok((pooled, hidden))
    }

    pub fn last_hidden(&self, tokens: &[usize]) -> Result<Vec<f64>> {
        Ok(self.forward(tokens)?.1)
    }

    fn backward(&mut self, tokens: &[usize], pooled: &[f64], hidden: &[f64], dhidden: &[f64]) {
        let dpooled = self.hidden.backward(pooled, hidden, dhidden);
        if self.embeddings.trainable {
            scatter_mean_grad(&mut self.embeddings.weights.grad, tokens, &dpooled);
        }
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        vec![&self.embeddings.weights, &self.hidden.weight, &self.hidden.bias]
    }

    pub(crate) fn trainable_parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = Vec::new();
        if self.embeddings.trainable {
            out.push(&mut self.embeddings.weights);
        }
        out.extend(self.hidden.parameters_mut());
        out
    }
}

/// Cheap order-insensitive classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct BowClassifier {
    pub trunk: BowTrunk,
    pub output: Dense,
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BowOutput {
    pub last_hidden: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl BowClassifier {
    /// Embeddings are updated during training.
    pub fn new(embeddings: EmbeddingTable, dims: &ModelDims, rng: &mut Rng) -> Self {
        let dim = embeddings.dim();
        Self {
            trunk: BowTrunk {
                embeddings: embeddings.with_trainable(true),
                hidden: Dense::new("hidden", dim, dims.bow_hidden, Activation::Relu, rng),
            },
            output: Dense::new("output", dims.bow_hidden, 2, Activation::Identity, rng),
            dropout: dims.dropout,
        }
    }

    pub fn hidden_width(&self) -> usize {
        self.trunk.hidden.n_out()
    }
}

/// pool → dense+relu (last hidden) → dropout → dense → softmax.
pub fn bow_forward(model: &BowClassifier, tokens: &[usize], mode: Mode, rng: &mut Rng) -> Result<BowOutput> {
    let (_, last_hidden) = model.trunk.forward(tokens)?;
    let (dropped, _) = dropout(&last_hidden, model.dropout, mode, rng)?;
    let logits = model.output.forward(&dropped)?;
    let probs = softmax(&logits);
    Ok(BowOutput {
        last_hidden,
        logits,
        probs,
    })
}

impl Trainable for BowClassifier {
    fn probs(&self, tokens: &[usize]) -> Result<[f64; 2]> {
        let (_, hidden) = self.trunk.forward(tokens)?;
        Ok(as_pair(&softmax(&self.output.forward(&hidden)?)))
    }

    fn accumulate(&mut self, example: &Example, mode: Mode, rng: &mut Rng) -> Result<f64> {
        let (pooled, hidden) = self.trunk.forward(&example.tokens)?;
        let (dropped, mask) = dropout(&hidden, self.dropout, mode, rng)?;
        let logits = self.output.forward(&dropped)?;
        let (loss, probs) = softmax_cross_entropy(&logits, example.label)?;
        let dlogits = cross_entropy_grad(&probs, example.label);
        let ddropped = self.output.backward(&dropped, &logits, &dlogits);
        let dhidden = mask.backward(&ddropped);
        self.trunk.backward(&example.tokens, &pooled, &hidden, &dhidden);
        Ok(loss)
    }

    fn loss(&self, example: &Example) -> Result<f64> {
        let (_, hidden) = self.trunk.forward(&example.tokens)?;
        let logits = self.output.forward(&hidden)?;
        Ok(softmax_cross_entropy(&logits, example.label)?.0)
    }

    fn trainable_parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = self.trunk.trainable_parameters_mut();
        out.extend(self.output.parameters_mut());
        out
    }

    fn parameters(&self) -> Vec<&Parameter> {
        let mut out = self.trunk.parameters();
        out.extend(self.output.parameters());
        out
    }
}
