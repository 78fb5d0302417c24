//! Finite-difference checks of every layer and every model, on small random
//! instances.

use serde::Serialize;

use crate::data::{EmbeddingTable, Example};
use crate::nn::{
    dropout, grad_check, mean_max_pool, mean_max_pool_backward, softmax_cross_entropy, Activation, BiLstm, Dense,
    GradCheck, Mode, Parameter, Rng, Tensor, DEFAULT_GRAD_CHECK_STEP,
};

use super::{BowClassifier, DecisionNet, LstmClassifier, ModelDims, ModelGradCheck, Trainable};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckResult {
    pub name: &'static str,
    pub seed: u64,
    pub max_rel_error: f64,
}

fn random_param(name: &str, shape: Vec<usize>, std: f64, rng: &mut Rng) -> Parameter {
    let n = shape.iter().product();
    Parameter::new(name, Tensor::new(shape, (0..n).map(|_| rng.normal(0.0, std)).collect()).expect("shape matches"))
}

/// Moves every bias off zero so no relu sits exactly on its kink.
fn jitter_biases(params: Vec<&mut Parameter>, std: f64, rng: &mut Rng) {
    for p in params.into_iter().filter(|p| p.name.ends_with("bias")) {
        p.value.data_mut().iter_mut().for_each(|b| *b += rng.normal(0.0, std));
    }
}

fn probe(values: &[f64], coeffs: &[f64]) -> f64 {
    values.iter().zip(coeffs).map(|(v, c)| v * c).sum()
}

/// Dense layer and its input under a fixed linear read-out.
struct DenseProbe {
    layer: Dense,
    x: Parameter,
    coeffs: Vec<f64>,
}

impl GradCheck for DenseProbe {
    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = self.layer.parameters_mut();
        out.push(&mut self.x);
        out
    }
    fn loss(&self) -> f64 {
        probe(&self.layer.forward(self.x.value.data()).expect("sizes"), &self.coeffs)
    }
    fn loss_and_grad(&mut self) -> f64 {
        let x = self.x.value.data().to_vec();
        let out = self.layer.forward(&x).expect("sizes");
        let dx = self.layer.backward(&x, &out, &self.coeffs);
        self.x.grad.data_mut().iter_mut().zip(dx).for_each(|(g, d)| *g += d);
        probe(&out, &self.coeffs)
    }
}

struct BiLstmProbe {
    layer: BiLstm,
    xs: Parameter,
    coeffs: Vec<f64>,
}

impl GradCheck for BiLstmProbe {
    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = self.layer.parameters_mut();
        out.push(&mut self.xs);
        out
    }
    fn loss(&self) -> f64 {
        probe(self.layer.forward(&self.xs.value).expect("sizes").0.data(), &self.coeffs)
    }
    fn loss_and_grad(&mut self) -> f64 {
        let (out, cache) = self.layer.forward(&self.xs.value).expect("sizes");
        let dx = self.layer.backward_pass(&cache, &self.coeffs);
        self.xs.grad.data_mut().iter_mut().zip(dx).for_each(|(g, d)| *g += d);
        probe(out.data(), &self.coeffs)
    }
}

struct PoolProbe {
    hs: Parameter,
    coeffs: Vec<f64>,
}

impl GradCheck for PoolProbe {
    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.hs]
    }
    fn loss(&self) -> f64 {
        probe(&mean_max_pool(&self.hs.value).expect("non-empty").0, &self.coeffs)
    }
    fn loss_and_grad(&mut self) -> f64 {
        let (pooled, cache) = mean_max_pool(&self.hs.value).expect("non-empty");
        let dx = mean_max_pool_backward(&cache, &self.coeffs);
        self.hs.grad.data_mut().iter_mut().zip(dx).for_each(|(g, d)| *g += d);
        probe(&pooled, &self.coeffs)
    }
}

struct SoftmaxProbe {
    logits: Parameter,
    label: usize,
}

impl GradCheck for SoftmaxProbe {
    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.logits]
    }
    fn loss(&self) -> f64 {
        softmax_cross_entropy(self.logits.value.data(), self.label).expect("label in range").0
    }
    fn loss_and_grad(&mut self) -> f64 {
        let (loss, probs) = softmax_cross_entropy(self.logits.value.data(), self.label).expect("label in range");
        let d = crate::nn::cross_entropy_grad(&probs, self.label);
        self.logits.grad.data_mut().iter_mut().zip(d).for_each(|(g, d)| *g += d);
        loss
    }
}

/// Train-mode dropout with the mask pinned by reseeding.
struct DropoutProbe {
    x: Parameter,
    coeffs: Vec<f64>,
    mask_seed: u64,
}

impl GradCheck for DropoutProbe {
    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.x]
    }
    fn loss(&self) -> f64 {
        let (y, _) = dropout(self.x.value.data(), 0.5, Mode::Train, &mut Rng::new(self.mask_seed)).expect("valid p");
        probe(&y, &self.coeffs)
    }
    fn loss_and_grad(&mut self) -> f64 {
        let (y, mask) = dropout(self.x.value.data(), 0.5, Mode::Train, &mut Rng::new(self.mask_seed)).expect("valid p");
        let dx = mask.backward(&self.coeffs);
        self.x.grad.data_mut().iter_mut().zip(dx).for_each(|(g, d)| *g += d);
        probe(&y, &self.coeffs)
    }
}

const VOCAB: usize = 12;
// Saturated gates give gradient coordinates near 1e-9, below what central
// differences resolve; modest inputs keep every coordinate measurable.
const LSTM_INPUT_STD: f64 = 0.5;
const LSTM_BIAS_JITTER: f64 = 0.2;

fn small_dims() -> ModelDims {
    ModelDims {
        embedding_dim: 4,
        bow_hidden: 6,
        lstm_projection: 4,
        lstm_hidden: 3,
        lstm_mlp_hidden: 5,
        decision_hidden: 4,
        dropout: 0.5,
    }
}

fn examples(rng: &mut Rng) -> Vec<Example> {
    (0..4)
        .map(|_| {
            let len = rng.between(1, 6);
            Example {
                tokens: (0..len).map(|_| rng.between(2, VOCAB - 1)).collect(),
                label: rng.below(2),
                is_subtree: false,
            }
        })
        .collect()
}

fn coeffs(n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| rng.normal(0.0, 1.0)).collect()
}

/// Worst relative error for each checked component at one seed.
pub fn gradient_check_suite(seed: u64) -> Vec<GradCheckResult> {
    let mut rng = Rng::new(seed);
    let h = DEFAULT_GRAD_CHECK_STEP;
    let mut out = Vec::new();
    let mut record = |name, target: &mut dyn GradCheck, rng: &mut Rng| {
        let max_rel_error = grad_check(target, h, rng);
        out.push(GradCheckResult {
            name,
            seed,
            max_rel_error,
        });
    };

    for (name, act) in [("dense_identity", Activation::Identity), ("dense_relu", Activation::Relu)] {
        let mut layer = Dense::new("dense", 5, 4, act, &mut rng);
        jitter_biases(layer.parameters_mut(), 0.5, &mut rng);
        let mut p = DenseProbe {
            layer,
            x: random_param("x", vec![5], 1.0, &mut rng),
            coeffs: coeffs(4, &mut rng),
        };
        record(name, &mut p, &mut rng);
    }

    let steps = rng.between(1, 5);
    let mut layer = BiLstm::new("bilstm", 3, 4, &mut rng);
    jitter_biases(layer.parameters_mut(), LSTM_BIAS_JITTER, &mut rng);
    let mut lstm = BiLstmProbe {
        layer,
        xs: random_param("xs", vec![steps, 3], LSTM_INPUT_STD, &mut rng),
        coeffs: coeffs(steps * 8, &mut rng),
    };
    record("bilstm", &mut lstm, &mut rng);

    let mut pool = PoolProbe {
        hs: random_param("hs", vec![4, 3], 1.0, &mut rng),
        coeffs: coeffs(6, &mut rng),
    };
    record("mean_max_pool", &mut pool, &mut rng);

    let mut sm = SoftmaxProbe {
        logits: random_param("logits", vec![2], 1.0, &mut rng),
        label: rng.below(2),
    };
    record("softmax_cross_entropy", &mut sm, &mut rng);

    let mut dr = DropoutProbe {
        x: random_param("x", vec![8], 1.0, &mut rng),
        coeffs: coeffs(8, &mut rng),
        mask_seed: seed,
    };
    record("dropout", &mut dr, &mut rng);

    let dims = small_dims();
    let emb = Tensor::new(
        vec![VOCAB, dims.embedding_dim],
        (0..VOCAB * dims.embedding_dim).map(|_| rng.normal(0.0, LSTM_INPUT_STD)).collect(),
    )
    .expect("shape matches");
    let table = EmbeddingTable::new(emb, true);

    let mut bow = BowClassifier::new(table.clone(), &dims, &mut rng);
    jitter_biases(bow.trainable_parameters_mut(), 0.5, &mut rng);
    let mut m = ModelGradCheck {
        model: bow.clone(),
        examples: examples(&mut rng),
    };
    record("bow_classifier", &mut m, &mut rng);

    let mut lstm = LstmClassifier::new(table, &dims, &mut rng);
    jitter_biases(lstm.trainable_parameters_mut(), LSTM_BIAS_JITTER, &mut rng);
    let mut m = ModelGradCheck {
        model: lstm,
        examples: examples(&mut rng),
    };
    record("lstm_classifier", &mut m, &mut rng);

    let mut net = DecisionNet::from_bow(&bow, &dims, &mut rng);
    jitter_biases(net.trainable_parameters_mut(), 0.5, &mut rng);
    let mut m = ModelGradCheck {
        model: net,
        examples: examples(&mut rng),
    };
    record("decision_net", &mut m, &mut rng);

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_covers_every_component() {
        let r = gradient_check_suite(0);
        assert_eq!(r.len(), 9);
        for x in &r {
            assert!(x.max_rel_error < 1e-4, "{} failed: {}", x.name, x.max_rel_error);
        }
    }
}
