use crate::data::{EmbeddingTable, Example};
use crate::nn::{
    cross_entropy_grad, dropout, mean_max_pool, mean_max_pool_backward, softmax, softmax_cross_entropy, Activation,
    BiLstm, Dense, Mode, Parameter, Rng, Tensor,
};

use super::{as_pair, ensure_tokens, ModelDims, Result, Trainable};

/// Frozen embeddings → trainable linear projection → bi-LSTM →
/// mean+max pooling → dropout → two-layer MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmClassifier {
    pub embeddings: EmbeddingTable,
    pub projection: Dense,
    pub bilstm: BiLstm,
    pub hidden: Dense,
    pub output: Dense,
    pub dropout: f64,
}

struct Activations {
    embedded: Vec<f64>,
    projected: Vec<Vec<f64>>,
    lstm_cache: crate::nn::BiLstmCache,
    pool_cache: crate::nn::PoolCache,
    pooled: Vec<f64>,
}

impl LstmClassifier {
    pub fn new(embeddings: EmbeddingTable, dims: &ModelDims, rng: &mut Rng) -> Self {
        let dim = embeddings.dim();
        Self {
            embeddings: embeddings.with_trainable(false),
            projection: Dense::new("projection", dim, dims.lstm_projection, Activation::Identity, rng),
            bilstm: BiLstm::new("bilstm", dims.lstm_projection, dims.lstm_hidden, rng),
            hidden: Dense::new("hidden", 4 * dims.lstm_hidden, dims.lstm_mlp_hidden, Activation::Relu, rng),
            output: Dense::new("output", dims.lstm_mlp_hidden, 2, Activation::Identity, rng),
            dropout: dims.dropout,
        }
    }

    /// Width of the pooled feature vector (`4h`).
    pub fn pooled_width(&self) -> usize {
        4 * self.bilstm.hidden()
    }

    fn encode(&self, tokens: &[usize]) -> Result<Activations> {
        ensure_tokens(tokens)?;
        let dim = self.embeddings.dim();
        let mut embedded = Vec::with_capacity(tokens.len() * dim);
        let mut projected = Vec::with_capacity(tokens.len());
        let mut flat = Vec::with_capacity(tokens.len() * self.projection.n_out());
        for &t in tokens {
            let row = self.embeddings.row(t);
            embedded.extend_from_slice(row);
            let p = self.projection.forward(row)?;
            flat.extend_from_slice(&p);
            projected.push(p);
        }
        let xs = Tensor::new(vec![tokens.len(), self.projection.n_out()], flat)?;
        let (hs, lstm_cache) = self.bilstm.forward(&xs)?;
        let (pooled, pool_cache) = mean_max_pool(&hs)?;
        Ok(Activations {
            embedded,
            projected,
            lstm_cache,
            pool_cache,
            pooled,
        })
    }

    /// Mean+max pooled bi-LSTM states.
    pub fn pooled_features(&self, tokens: &[usize]) -> Result<Vec<f64>> {
        Ok(self.encode(tokens)?.pooled)
    }
}

/// Returns `(logits, probs)`.
pub fn lstm_forward(model: &LstmClassifier, tokens: &[usize], mode: Mode, rng: &mut Rng) -> Result<(Vec<f64>, Vec<f64>)> {
    let acts = model.encode(tokens)?;
    let (dropped, _) = dropout(&acts.pooled, model.dropout, mode, rng)?;
    let hidden = model.hidden.forward(&dropped)?;
    let logits = model.output.forward(&hidden)?;
    let probs = softmax(&logits);
    Ok((logits, probs))
}

impl Trainable for LstmClassifier {
    fn probs(&self, tokens: &[usize]) -> Result<[f64; 2]> {
        let pooled = self.pooled_features(tokens)?;
        let hidden = self.hidden.forward(&pooled)?;
        Ok(as_pair(&softmax(&self.output.forward(&hidden)?)))
    }

    fn accumulate(&mut self, example: &Example, mode: Mode, rng: &mut Rng) -> Result<f64> {
        let acts = self.encode(&example.tokens)?;
        let (dropped, mask) = dropout(&acts.pooled, self.dropout, mode, rng)?;
        let hidden = self.hidden.forward(&dropped)?;
        let logits = self.output.forward(&hidden)?;
        let (loss, probs) = softmax_cross_entropy(&logits, example.label)?;

        let dlogits = cross_entropy_grad(&probs, example.label);
        let dhidden = self.output.backward(&hidden, &logits, &dlogits);
        let ddropped = self.hidden.backward(&dropped, &hidden, &dhidden);
        let dpooled = mask.backward(&ddropped);
        let dhs = mean_max_pool_backward(&acts.pool_cache, &dpooled);
        let dxs = self.bilstm.backward_pass(&acts.lstm_cache, &dhs);
        let dim = self.embeddings.dim();
        let width = self.projection.n_out();
        for (t, projected) in acts.projected.iter().enumerate() {
            let x = &acts.embedded[t * dim..(t + 1) * dim];
            // embeddings are frozen, so the input gradient is dropped
            self.projection.backward(x, projected, &dxs[t * width..(t + 1) * width]);
        }
        Ok(loss)
    }

    fn loss(&self, example: &Example) -> Result<f64> {
        let pooled = self.pooled_features(&example.tokens)?;
        let hidden = self.hidden.forward(&pooled)?;
        let logits = self.output.forward(&hidden)?;
        Ok(softmax_cross_entropy(&logits, example.label)?.0)
    }

    fn trainable_parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = self.projection.parameters_mut();
        out.extend(self.bilstm.parameters_mut());
        out.extend(self.hidden.parameters_mut());
        out.extend(self.output.parameters_mut());
        out
    }

    fn parameters(&self) -> Vec<&Parameter> {
        let mut out = vec![&self.embeddings.weights];
        out.extend(self.projection.parameters());
        out.extend(self.bilstm.parameters());
        out.extend(self.hidden.parameters());
        out.extend(self.output.parameters());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelError;

    fn model(rng: &mut Rng) -> LstmClassifier {
        let emb = Tensor::new(vec![8, 3], (0..24).map(|_| rng.normal(0.0, 1.0)).collect()).unwrap();
        let dims = ModelDims {
            lstm_projection: 4,
            lstm_hidden: 3,
            lstm_mlp_hidden: 5,
            ..Default::default()
        };
        LstmClassifier::new(EmbeddingTable::new(emb, true), &dims, rng)
    }

    #[test]
    fn embeddings_are_frozen() {
        let m = model(&mut Rng::new(0));
        assert!(!m.embeddings.trainable);
        assert_eq!(m.pooled_width(), 12);
    }

    #[test]
    fn zero_weights_are_uniform() {
        let mut rng = Rng::new(1);
        let mut m = model(&mut rng);
        for p in m.bilstm.parameters_mut() {
            p.value.fill(0.0);
        }
        for p in m.hidden.parameters_mut().into_iter().chain(m.output.parameters_mut()) {
            p.value.fill(0.0);
        }
        let (_, probs) = lstm_forward(&m, &[2, 3, 4], Mode::Eval, &mut rng).unwrap();
        assert_eq!(probs, vec![0.5, 0.5]);
    }

    #[test]
    fn probabilities_normalize_for_various_lengths() {
        let mut rng = Rng::new(2);
        let m = model(&mut rng);
        for len in [1, 2, 7] {
            let tokens: Vec<usize> = (0..len).map(|i| 2 + i % 6).collect();
            let (logits, probs) = lstm_forward(&m, &tokens, Mode::Eval, &mut rng).unwrap();
            assert_eq!(logits.len(), 2);
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_straight_line_oracle() {
        let mut rng = Rng::new(3);
        let m = model(&mut rng);
        let tokens = [4usize, 6];
        let (_, probs) = lstm_forward(&m, &tokens, Mode::Eval, &mut rng).unwrap();

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let affine = |w: &Tensor, b: &[f64], x: &[f64]| -> Vec<f64> {
            (0..w.rows())
                .map(|o| b[o] + w.row(o).iter().zip(x).map(|(a, c)| a * c).sum::<f64>())
                .collect()
        };
        let xs: Vec<Vec<f64>> = tokens
            .iter()
            .map(|&t| affine(&m.projection.weight.value, m.projection.bias.value.data(), m.embeddings.row(t)))
            .collect();
        let run = |cell: &crate::nn::LstmCell, order: &[usize]| -> Vec<Vec<f64>> {
            let h = cell.hidden();
            let mut out = vec![vec![0.0; h]; xs.len()];
            let (mut hp, mut cp) = (vec![0.0; h], vec![0.0; h]);
            for &t in order {
                let a = affine(&cell.w_ih.value, cell.bias.value.data(), &xs[t]);
                let r = affine(&cell.w_hh.value, &vec![0.0; 4 * h], &hp);
                let z: Vec<f64> = a.iter().zip(&r).map(|(p, q)| p + q).collect();
                let mut hn = vec![0.0; h];
                let mut cn = vec![0.0; h];
                for j in 0..h {
                    cn[j] = sig(z[h + j]) * cp[j] + sig(z[j]) * z[2 * h + j].tanh();
                    hn[j] = sig(z[3 * h + j]) * cn[j].tanh();
                }
                out[t] = hn.clone();
                hp = hn;
                cp = cn;
            }
            out
        };
        let fwd = run(&m.bilstm.forward, &[0, 1]);
        let bwd = run(&m.bilstm.backward, &[1, 0]);
        let rows: Vec<Vec<f64>> = (0..2).map(|t| [fwd[t].clone(), bwd[t].clone()].concat()).collect();
        let k = rows[0].len();
        let mut pooled: Vec<f64> = (0..k).map(|j| (rows[0][j] + rows[1][j]) / 2.0).collect();
        pooled.extend((0..k).map(|j| rows[0][j].max(rows[1][j])));
        let hidden: Vec<f64> = affine(&m.hidden.weight.value, m.hidden.bias.value.data(), &pooled)
            .into_iter()
            .map(|v| v.max(0.0))
            .collect();
        let logits = affine(&m.output.weight.value, m.output.bias.value.data(), &hidden);
        let p1 = sig(logits[1] - logits[0]);
        assert!((probs[1] - p1).abs() < 1e-10);
    }

    #[test]
    fn empty_tokens_are_rejected() {
        let mut rng = Rng::new(4);
        let m = model(&mut rng);
        assert!(matches!(lstm_forward(&m, &[], Mode::Eval, &mut rng), Err(ModelError::EmptyInput)));
    }
}
