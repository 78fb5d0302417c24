use serde::{Deserialize, Serialize};

use crate::cascade::{compute_cost, expected_accuracy, route, Choice, CostKind, CostModel, Strategy};
use crate::nn::Rng;

use super::{EvalError, EvalPredictions, Result};

pub const DEFAULT_GRID_SIZE: usize = 201;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    NaiveRatio,
    ProbThreshold,
    DecisionNet,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 3] = [StrategyKind::NaiveRatio, StrategyKind::ProbThreshold, StrategyKind::DecisionNet];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::NaiveRatio => "naive_ratio",
            StrategyKind::ProbThreshold => "prob_threshold",
            StrategyKind::DecisionNet => "decision_net",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    fn strategy(self, knob: f64) -> Strategy {
        match self {
            StrategyKind::NaiveRatio => Strategy::NaiveRatio { alpha: knob },
            StrategyKind::ProbThreshold => Strategy::ProbThreshold { tau: knob },
            StrategyKind::DecisionNet => Strategy::DecisionNet { tau_d: knob },
        }
    }

    fn knob_range(self) -> (f64, f64) {
        match self {
            StrategyKind::ProbThreshold => (0.5, 1.0),
            _ => (0.0, 1.0),
        }
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Threshold or ratio that produced the point; `None` for the LSTM-only anchor.
    pub knob: Option<f64>,
    pub savings: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub strategy: StrategyKind,
    pub points: Vec<CurvePoint>,
}

impl Curve {
    /// Anchors at `(0, anchor_accuracy)`, drops negative savings, sorts and
    /// keeps the first point of every savings value.
    fn assemble(strategy: StrategyKind, anchor_accuracy: f64, mut points: Vec<CurvePoint>) -> Self {
        points.retain(|p| p.savings >= 0.0);
        points.sort_by(|a, b| a.savings.total_cmp(&b.savings));
        let mut out = vec![CurvePoint {
            knob: None,
            savings: 0.0,
            accuracy: anchor_accuracy,
        }];
        for p in points {
            if p.savings > out.last().expect("anchor").savings {
                out.push(p);
            }
        }
        Self { strategy, points: out }
    }

    pub fn max_savings(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.savings)
    }

    /// Accuracy interpolated linearly at `savings`; `None` outside the curve.
    pub fn accuracy_at(&self, savings: f64) -> Option<f64> {
        let i = self.points.partition_point(|p| p.savings < savings);
        let hi = self.points.get(i)?;
        if hi.savings == savings || i == 0 {
            return (hi.savings == savings).then_some(hi.accuracy);
        }
        let lo = self.points[i - 1];
        let t = (savings - lo.savings) / (hi.savings - lo.savings);
        Some(lo.accuracy + t * (hi.accuracy - lo.accuracy))
    }
}

fn grid(lo: f64, hi: f64, size: usize) -> Result<Vec<f64>> {
    if size < 2 {
        return Err(EvalError::Parameter(format!("grid size must be at least 2, got {size}")));
    }
    let last = (size - 1) as f64;
    Ok((0..size).map(|k| lo + (hi - lo) * k as f64 / last).collect())
}

fn savings_of(cost: f64, costs: &CostModel) -> f64 {
    1.0 - cost / costs.c_lstm
}

/// `(alpha, savings, accuracy)` of one deterministic routing setting.
/// `overhead` is added to the cost of the decision-network strategy.
pub fn routed_point(
    kind: StrategyKind,
    preds: &EvalPredictions,
    costs: &CostModel,
    knob: f64,
    overhead: f64,
) -> Result<(f64, f64, f64)> {
    if kind == StrategyKind::NaiveRatio {
        return Err(EvalError::Parameter("the ratio strategy is random; use sampled_ratio_curve".into()));
    }
    let strategy = kind.strategy(knob);
    strategy.validate()?;
    if kind == StrategyKind::DecisionNet && preds.decision_probs.is_none() {
        return Err(EvalError::MissingDecisionProbs);
    }
    let mut rng = Rng::new(0);
    let (mut n_bow, mut correct) = (0usize, 0usize);
    for i in 0..preds.len() {
        let d = preds.decision_probs.as_ref().map(|d| d[i]);
        let pred = match route(&strategy, preds.bow_max_prob(i), d, &mut rng)? {
            Choice::Bow => {
                n_bow += 1;
                preds.bow_pred(i)
            }
            Choice::Lstm => preds.lstm_pred(i),
        };
        correct += usize::from(pred == preds.gold[i]);
    }
    let n = preds.len() as f64;
    let alpha = n_bow as f64 / n;
    let mut cost = compute_cost(CostKind::Strategy, alpha, costs);
    if kind == StrategyKind::DecisionNet {
        cost += overhead;
    }
    Ok((alpha, savings_of(cost, costs), correct as f64 / n))
}

/// Sweeps the strategy's knob over `grid_size` evenly spaced values.
pub fn speed_accuracy_curve(
    kind: StrategyKind,
    preds: &EvalPredictions,
    costs: &CostModel,
    grid_size: usize,
) -> Result<Curve> {
    speed_accuracy_curve_with_overhead(kind, preds, costs, grid_size, 0.0)
}

/// As [`speed_accuracy_curve`], charging `decision_overhead` ms per sample
/// for the decision network on top of the BoW.
pub fn speed_accuracy_curve_with_overhead(
    kind: StrategyKind,
    preds: &EvalPredictions,
    costs: &CostModel,
    grid_size: usize,
    decision_overhead: f64,
) -> Result<Curve> {
    costs.validate()?;
    if !(decision_overhead >= 0.0 && decision_overhead.is_finite()) {
        return Err(EvalError::Parameter(format!("decision overhead {decision_overhead} must be non-negative")));
    }
    if preds.is_empty() {
        return Err(EvalError::Alignment("no evaluation examples".into()));
    }
    if kind == StrategyKind::NaiveRatio {
        return naive_ratio_curve(preds.bow_accuracy(), preds.lstm_accuracy(), costs, grid_size);
    }
    let (lo, hi) = kind.knob_range();
    let points = grid(lo, hi, grid_size)?
        .into_iter()
        .map(|knob| {
            let (_, savings, accuracy) = routed_point(kind, preds, costs, knob, decision_overhead)?;
            Ok(CurvePoint {
                knob: Some(knob),
                savings,
                accuracy,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Curve::assemble(kind, preds.lstm_accuracy(), points))
}

/// Expected accuracy of random routing as a straight line in savings.
pub fn naive_ratio_curve(a_bow: f64, a_lstm: f64, costs: &CostModel, grid_size: usize) -> Result<Curve> {
    costs.validate()?;
    let points = grid(0.0, 1.0, grid_size)?
        .into_iter()
        .map(|alpha| {
            Ok(CurvePoint {
                knob: Some(alpha),
                savings: savings_of(compute_cost(CostKind::Ratio, alpha, costs), costs),
                accuracy: expected_accuracy(alpha, a_bow, a_lstm)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Curve::assemble(StrategyKind::NaiveRatio, a_lstm, points))
}

/// Random routing actually carried out on `preds`; savings use the realized
/// BoW fraction.
pub fn sampled_ratio_curve(preds: &EvalPredictions, costs: &CostModel, grid_size: usize, rng: &mut Rng) -> Result<Curve> {
    costs.validate()?;
    if preds.is_empty() {
        return Err(EvalError::Alignment("no evaluation examples".into()));
    }
    let n = preds.len() as f64;
    let mut points = Vec::with_capacity(grid_size);
    for alpha in grid(0.0, 1.0, grid_size)? {
        let strategy = Strategy::NaiveRatio { alpha };
        let (mut n_bow, mut correct) = (0usize, 0usize);
        for i in 0..preds.len() {
            let pred = match route(&strategy, preds.bow_max_prob(i), None, rng)? {
                Choice::Bow => {
                    n_bow += 1;
                    preds.bow_pred(i)
                }
                Choice::Lstm => preds.lstm_pred(i),
            };
            correct += usize::from(pred == preds.gold[i]);
        }
        let realized = n_bow as f64 / n;
        points.push(CurvePoint {
            knob: Some(alpha),
            savings: savings_of(compute_cost(CostKind::Ratio, realized, costs), costs),
            accuracy: correct as f64 / n,
        });
    }
    Ok(Curve::assemble(StrategyKind::NaiveRatio, preds.lstm_accuracy(), points))
}

/// Mean accuracy over the curve's savings range, in percent, with linear
/// interpolation between points.
pub fn auc(curve: &Curve) -> Result<f64> {
    if curve.points.len() < 2 {
        return Err(EvalError::DegenerateCurve(format!("{} point(s)", curve.points.len())));
    }
    let s_max = curve.max_savings();
    if s_max <= 0.0 {
        return Err(EvalError::DegenerateCurve("no positive savings".into()));
    }
    let area: f64 = curve
        .points
        .windows(2)
        .map(|w| (w[1].savings - w[0].savings) * (w[0].accuracy + w[1].accuracy) / 2.0)
        .sum();
    Ok(100.0 * area / s_max)
}
