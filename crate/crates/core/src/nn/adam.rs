use serde::{Deserialize, Serialize};

use super::{NnError, Parameter, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Adam {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }

    pub fn step(&self, param: &mut Parameter) -> Result<()> {
        adam_step(param, self.lr, self.beta1, self.beta2, self.eps)
    }
}

/// Bias-corrected Adam update. Zeroes the gradient afterwards.
pub fn adam_step(param: &mut Parameter, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Result<()> {
    if !param.grad.is_finite() {
        return Err(NnError::Numeric(format!("gradient of {}", param.name)));
    }
    param.step_count += 1;
    let t = param.step_count as i32;
    let correction1 = 1.0 - beta1.powi(t);
    let correction2 = 1.0 - beta2.powi(t);
    let Parameter { value, grad, m, v, .. } = param;
    for (((w, g), m), v) in value
        .data_mut()
        .iter_mut()
        .zip(grad.data_mut().iter_mut())
        .zip(m.data_mut().iter_mut())
        .zip(v.data_mut().iter_mut())
    {
        *m = beta1 * *m + (1.0 - beta1) * *g;
        *v = beta2 * *v + (1.0 - beta2) * *g * *g;
        let m_hat = *m / correction1;
        let v_hat = *v / correction2;
        *w -= lr * m_hat / (v_hat.sqrt() + eps);
        *g = 0.0;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn scalar(value: f64) -> Parameter {
        Parameter::new("w", Tensor::from_vec(vec![value]))
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut p = Parameter::new("w", Tensor::from_vec(vec![0.3, -1.7, 2.0]));
        let before = p.value.clone();
        for _ in 0..3 {
            Adam::default().step(&mut p).unwrap();
        }
        assert_eq!(p.value, before);
        assert_eq!(p.step_count, 3);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar(0.0);
        p.grad.data_mut()[0] = 1.0;
        Adam::default().step(&mut p).unwrap();
        let expected = -5e-4 / (1.0 + 1e-8);
        assert!((p.value.data()[0] - expected).abs() < 1e-18);
        assert_eq!(p.grad.data()[0], 0.0);
    }

    #[test]
    fn matches_scalar_reference() {
        let (lr, b1, b2, eps) = (5e-4, 0.9, 0.999, 1e-8);
        let mut p = scalar(0.25);
        let (mut w, mut m, mut v) = (0.25f64, 0.0f64, 0.0f64);
        for t in 1..=5 {
            let g = 0.7;
            p.grad.data_mut()[0] = g;
            adam_step(&mut p, lr, b1, b2, eps).unwrap();
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            w -= lr * mh / (vh.sqrt() + eps);
            assert!((p.value.data()[0] - w).abs() < 1e-12);
        }
        assert_eq!(p.step_count, 5);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = scalar(1.0);
        p.grad.data_mut()[0] = f64::NAN;
        assert!(matches!(Adam::default().step(&mut p), Err(NnError::Numeric(_))));
        assert_eq!(p.step_count, 0);
    }
}
