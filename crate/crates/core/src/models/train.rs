use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::CostModel;
use crate::data::Example;
use crate::eval::{auc, speed_accuracy_curve, EvalPredictions, StrategyKind};
use crate::nn::{Adam, Mode, Rng};

use super::{DecisionNet, ModelError, Result, Trainable};

/// Epoch cap of the training protocol.
pub const MAX_EPOCHS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    Accuracy,
    Auc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub seed: u64,
    pub selection_metric: SelectionMetric,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            max_epochs: MAX_EPOCHS,
            batch_size: 64,
            patience: 5,
            seed: 0,
            selection_metric: SelectionMetric::Accuracy,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.max_epochs > MAX_EPOCHS {
            return Err(ModelError::Config(format!(
                "max_epochs must be in 1..={MAX_EPOCHS}, got {}",
                self.max_epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch_size must be positive".into()));
        }
        if self.patience == 0 {
            return Err(ModelError::Config("patience must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(ModelError::Config(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean train-mode loss over the epoch.
    pub train_loss: f64,
    /// Validation score used for snapshot selection.
    pub metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_metric: f64,
}

/// Eval-mode class probabilities for every example, in order.
pub fn predict_all<M: Trainable>(model: &M, examples: &[Example]) -> Result<Vec<[f64; 2]>> {
    examples.par_iter().map(|e| model.probs(&e.tokens)).collect()
}

pub fn accuracy<M: Trainable>(model: &M, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Err(ModelError::Config("cannot score an empty example set".into()));
    }
    let probs = predict_all(model, examples)?;
    let correct = probs
        .iter()
        .zip(examples)
        .filter(|(p, e)| crate::eval::argmax(p) == e.label)
        .count();
    Ok(correct as f64 / examples.len() as f64)
}

pub fn mean_loss<M: Trainable>(model: &M, examples: &[Example]) -> Result<f64> {
    let losses: Vec<f64> = examples.par_iter().map(|e| model.loss(e)).collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / examples.len().max(1) as f64)
}

/// Mini-batch Adam with per-epoch validation and best-snapshot early
/// stopping. `score` is maximized.
pub fn fit<M, F>(mut model: M, train: &[Example], config: &TrainConfig, mut score: F) -> Result<(M, TrainHistory)>
where
    M: Trainable,
    F: FnMut(&M) -> Result<f64>,
{
    config.validate()?;
    if train.is_empty() {
        return Err(ModelError::Config("empty training set".into()));
    }
    let adam = Adam::with_lr(config.lr);
    let base = Rng::new(config.seed);
    let mut order_rng = base.derive(1);
    let mut dropout_rng = base.derive(2);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for p in model.trainable_parameters_mut() {
        p.zero_grad();
    }
    let mut best: Option<(M, usize, f64)> = None;
    let mut epochs = Vec::new();
    let mut stale = 0;
    for epoch in 1..=config.max_epochs {
        order_rng.shuffle(&mut order);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            for &i in batch {
                let loss = model.accumulate(&train[i], Mode::Train, &mut dropout_rng)?;
                if !loss.is_finite() {
                    return Err(ModelError::Diverged {
                        epoch,
                        message: format!("loss {loss} on example {i}"),
                    });
                }
                total += loss;
            }
            let scale = 1.0 / batch.len() as f64;
            for p in model.trainable_parameters_mut() {
                p.scale_grad(scale);
                adam.step(p).map_err(|e| ModelError::Diverged {
                    epoch,
                    message: e.to_string(),
                })?;
            }
        }
        let metric = score(&model)?;
        let train_loss = total / train.len() as f64;
        log::debug!("epoch {epoch}: loss {train_loss:.5} metric {metric:.5}");
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            metric,
        });
        if best.as_ref().is_none_or(|(_, _, m)| metric > *m) {
            best = Some((model.clone(), epoch, metric));
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    let (model, best_epoch, best_metric) = best.expect("at least one epoch ran");
    Ok((
        model,
        TrainHistory {
            epochs,
            best_epoch,
            best_metric,
        },
    ))
}

/// Early stopping on validation accuracy.
pub fn train_classifier<M: Trainable>(
    model: M,
    train: &[Example],
    valid: &[Example],
    config: &TrainConfig,
) -> Result<(M, TrainHistory)> {
    if valid.is_empty() {
        return Err(ModelError::Config("empty validation set".into()));
    }
    fit(model, train, config, |m| accuracy(m, valid))
}

/// What the decision network is scored against between epochs: held-out
/// sentences with the BoW and LSTM probabilities on them.
#[derive(Debug, Clone)]
pub struct DecisionValidation<'a> {
    pub examples: &'a [Example],
    pub predictions: EvalPredictions,
    pub costs: CostModel,
    pub grid_size: usize,
}

impl DecisionValidation<'_> {
    /// AUC (percent) of the decision-network strategy under `net`.
    pub fn score(&self, net: &DecisionNet) -> Result<f64> {
        let probs: Vec<f64> = self
            .examples
            .par_iter()
            .map(|e| net.p_lstm(&e.tokens))
            .collect::<Result<_>>()?;
        let preds = self.predictions.clone().with_decision_probs(probs).map_err(Box::new)?;
        let curve = speed_accuracy_curve(StrategyKind::DecisionNet, &preds, &self.costs, self.grid_size).map_err(Box::new)?;
        Ok(auc(&curve).map_err(Box::new)?)
    }
}

/// Trains the head only; the snapshot with the best validation AUC wins.
pub fn train_decision_net(
    net: DecisionNet,
    decision_train: &[Example],
    validation: &DecisionValidation<'_>,
    config: &TrainConfig,
) -> Result<(DecisionNet, TrainHistory)> {
    let lstm_share = decision_train.iter().filter(|e| e.label == super::DECISION_LSTM_CLASS).count();
    if lstm_share == 0 || lstm_share == decision_train.len() {
        log::warn!(
            "decision labels are degenerate: {lstm_share} of {} select the LSTM",
            decision_train.len()
        );
    }
    fit(net, decision_train, config, |n| validation.score(n))
}
