use serde::{Deserialize, Serialize};

use super::{NnError, Result, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

/// Per-entry scale factors applied by one dropout call (0 or `1/(1-p)`).
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    scale: Option<Vec<f64>>,
}

impl DropoutMask {
    pub fn identity() -> Self {
        Self { scale: None }
    }

    pub fn backward(&self, dout: &[f64]) -> Vec<f64> {
        match &self.scale {
            None => dout.to_vec(),
            Some(s) => dout.iter().zip(s).map(|(g, k)| g * k).collect(),
        }
    }
}

/// Inverted dropout. Eval mode (or `p == 0`) is an exact identity.
pub fn dropout(x: &[f64], p: f64, mode: Mode, rng: &mut Rng) -> Result<(Vec<f64>, DropoutMask)> {
    if !(0.0..1.0).contains(&p) {
        return Err(NnError::Parameter(format!("dropout probability {p} not in [0, 1)")));
    }
    if mode == Mode::Eval || p == 0.0 {
        return Ok((x.to_vec(), DropoutMask::identity()));
    }
    let keep = 1.0 / (1.0 - p);
    let scale: Vec<f64> = x
        .iter()
        .map(|_| if rng.bernoulli(p) { 0.0 } else { keep })
        .collect();
    let y = x.iter().zip(&scale).map(|(v, k)| v * k).collect();
    Ok((y, DropoutMask { scale: Some(scale) }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_is_identity() {
        let x = vec![1.0, -2.0, 3.5];
        let (y, _) = dropout(&x, 0.0, Mode::Train, &mut Rng::new(1)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn eval_is_identity() {
        let x = vec![1.0, -2.0, 3.5];
        let (y, mask) = dropout(&x, 0.5, Mode::Eval, &mut Rng::new(1)).unwrap();
        assert_eq!(y, x);
        assert_eq!(mask.backward(&[1.0, 1.0, 1.0]), vec![1.0; 3]);
    }

    #[test]
    fn train_mean_is_preserved() {
        let n = 10_000;
        let x = vec![1.0; n];
        let (y, _) = dropout(&x, 0.5, Mode::Train, &mut Rng::new(11)).unwrap();
        let mean = y.iter().sum::<f64>() / n as f64;
        // each entry is 0 or 2 with equal probability: std of the mean is 2·sqrt(0.25/n)
        let bound = 3.0 * (0.25 / n as f64).sqrt() * 2.0;
        assert!((mean - 1.0).abs() < bound, "mean {mean}");
        assert!(y.iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn rate_one_is_rejected() {
        assert!(matches!(
            dropout(&[1.0], 1.0, Mode::Train, &mut Rng::new(0)),
            Err(NnError::Parameter(_))
        ));
    }
}
