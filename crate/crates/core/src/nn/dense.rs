use serde::{Deserialize, Serialize};

use super::{check_len, NnError, Parameter, Result, Rng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
}

/// `activation(W x + b)` for `W: [n_out × n_in]`.
pub fn dense_forward(x: &[f64], w: &Tensor, b: &Tensor, activation: Activation) -> Result<Vec<f64>> {
    if w.shape().len() != 2 {
        return Err(NnError::Dimension {
            expected: "rank-2 weight".into(),
            actual: format!("{:?}", w.shape()),
        });
    }
    let (n_out, n_in) = (w.rows(), w.cols());
    check_len("input", n_in, x.len())?;
    check_len("bias", n_out, b.len())?;
    let wd = w.data();
    let out = b
        .data()
        .iter()
        .enumerate()
        .map(|(o, &bias)| {
            let row = &wd[o * n_in..(o + 1) * n_in];
            let z = bias + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            match activation {
                Activation::Identity => z,
                Activation::Relu => z.max(0.0),
            }
        })
        .collect();
    Ok(out)
}

/// Accumulates `dL/dW` and `dL/db` and returns `dL/dx`.
///
/// `out` is the forward output, used for the relu mask.
pub fn dense_backward(
    x: &[f64],
    out: &[f64],
    dout: &[f64],
    activation: Activation,
    w: &Tensor,
    dw: &mut Tensor,
    db: &mut Tensor,
) -> Vec<f64> {
    let n_in = x.len();
    let mut dx = vec![0.0; n_in];
    let wd = w.data();
    let dwd = dw.data_mut();
    let dbd = db.data_mut();
    for (o, (&g, &y)) in dout.iter().zip(out).enumerate() {
        let dz = match activation {
            Activation::Identity => g,
            Activation::Relu if y > 0.0 => g,
            Activation::Relu => 0.0,
        };
        if dz == 0.0 {
            continue;
        }
        dbd[o] += dz;
        let row = &wd[o * n_in..(o + 1) * n_in];
        let grow = &mut dwd[o * n_in..(o + 1) * n_in];
        for i in 0..n_in {
            grow[i] += dz * x[i];
            dx[i] += dz * row[i];
        }
    }
    dx
}

/// Fully connected layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Parameter,
    pub bias: Parameter,
    pub activation: Activation,
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn new(name: &str, n_in: usize, n_out: usize, activation: Activation, rng: &mut Rng) -> Self {
        let limit = (6.0 / (n_in + n_out) as f64).sqrt();
        let data = (0..n_in * n_out).map(|_| rng.uniform_range(-limit, limit)).collect();
        let weight = Tensor::new(vec![n_out, n_in], data).expect("shape matches");
        Self {
            weight: Parameter::new(format!("{name}.weight"), weight),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros(&[n_out])),
            activation,
        }
    }

    pub fn zeros(name: &str, n_in: usize, n_out: usize, activation: Activation) -> Self {
        Self {
            weight: Parameter::new(format!("{name}.weight"), Tensor::zeros(&[n_out, n_in])),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros(&[n_out])),
            activation,
        }
    }

    pub fn n_in(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn n_out(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        dense_forward(x, &self.weight.value, &self.bias.value, self.activation)
    }

    pub fn backward(&mut self, x: &[f64], out: &[f64], dout: &[f64]) -> Vec<f64> {
        dense_backward(
            x,
            out,
            dout,
            self.activation,
            &self.weight.value,
            &mut self.weight.grad,
            &mut self.bias.grad,
        )
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        vec![&self.weight, &self.bias]
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.weight, &mut self.bias]
    }
}
