use super::{check_len, sigmoid, NnError, Parameter, Result, Rng, Tensor};

/// One direction of an LSTM. Gate blocks are stacked in the order
/// input, forget, cell, output along the first axis of each weight.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub w_ih: Parameter,
    pub w_hh: Parameter,
    pub bias: Parameter,
    hidden: usize,
}

/// Activations of one direction, indexed by time step.
#[derive(Debug, Clone)]
pub struct LstmDirectionCache {
    /// Post-activation gates `[i f g o]`, `T × 4h`.
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

impl LstmDirectionCache {
    pub fn hidden_states(&self) -> &[f64] {
        &self.h
    }

    pub fn cell_states(&self) -> &[f64] {
        &self.c
    }
}

impl LstmCell {
    /// `uniform(-1/√h, 1/√h)` weights and biases, forget-gate bias shifted by +1.
    pub fn new(name: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let k = 1.0 / (hidden as f64).sqrt();
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.uniform_range(-k, k)).collect() };
        let w_ih = Tensor::new(vec![4 * hidden, input], draw(4 * hidden * input)).expect("shape");
        let w_hh = Tensor::new(vec![4 * hidden, hidden], draw(4 * hidden * hidden)).expect("shape");
        let mut bias = draw(4 * hidden);
        bias[hidden..2 * hidden].iter_mut().for_each(|b| *b += 1.0);
        Self {
            w_ih: Parameter::new(format!("{name}.w_ih"), w_ih),
            w_hh: Parameter::new(format!("{name}.w_hh"), w_hh),
            bias: Parameter::new(format!("{name}.bias"), Tensor::from_vec(bias)),
            hidden,
        }
    }

    pub fn from_parameters(w_ih: Parameter, w_hh: Parameter, bias: Parameter) -> Result<Self> {
        let hidden = w_hh.value.cols();
        check_len("w_hh rows", 4 * hidden, w_hh.value.rows())?;
        check_len("w_ih rows", 4 * hidden, w_ih.value.rows())?;
        check_len("bias", 4 * hidden, bias.value.len())?;
        Ok(Self {
            w_ih,
            w_hh,
            bias,
            hidden,
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn input(&self) -> usize {
        self.w_ih.value.cols()
    }

    /// Runs the recurrence over `xs` (`T × d`, row-major) with zero initial
    /// state. When `reverse` is set the scan goes from `T-1` down to `0`.
    pub fn forward(&self, xs: &[f64], steps: usize, reverse: bool) -> LstmDirectionCache {
        let h = self.hidden;
        let d = self.input();
        let wi = self.w_ih.value.data();
        let wh = self.w_hh.value.data();
        let b = self.bias.value.data();
        let mut cache = LstmDirectionCache {
            gates: vec![0.0; steps * 4 * h],
            c: vec![0.0; steps * h],
            tanh_c: vec![0.0; steps * h],
            h: vec![0.0; steps * h],
        };
        let zero = vec![0.0; h];
        let mut z = vec![0.0; 4 * h];
        for k in 0..steps {
            let t = if reverse { steps - 1 - k } else { k };
            let prev = if k == 0 {
                None
            } else if reverse {
                Some(t + 1)
            } else {
                Some(t - 1)
            };
            let x = &xs[t * d..(t + 1) * d];
            let (h_prev, c_prev): (Vec<f64>, Vec<f64>) = match prev {
                None => (zero.clone(), zero.clone()),
                Some(p) => (
                    cache.h[p * h..(p + 1) * h].to_vec(),
                    cache.c[p * h..(p + 1) * h].to_vec(),
                ),
            };
            for r in 0..4 * h {
                let wi_row = &wi[r * d..(r + 1) * d];
                let wh_row = &wh[r * h..(r + 1) * h];
                let mut acc = b[r];
                for j in 0..d {
                    acc += wi_row[j] * x[j];
                }
                for j in 0..h {
                    acc += wh_row[j] * h_prev[j];
                }
                z[r] = acc;
            }
            let gates = &mut cache.gates[t * 4 * h..(t + 1) * 4 * h];
            for j in 0..h {
                gates[j] = sigmoid(z[j]);
                gates[h + j] = sigmoid(z[h + j]);
                gates[2 * h + j] = z[2 * h + j].tanh();
                gates[3 * h + j] = sigmoid(z[3 * h + j]);
            }
            for j in 0..h {
                let c = gates[h + j] * c_prev[j] + gates[j] * gates[2 * h + j];
                let tc = c.tanh();
                cache.c[t * h + j] = c;
                cache.tanh_c[t * h + j] = tc;
                cache.h[t * h + j] = gates[3 * h + j] * tc;
            }
        }
        cache
    }

    /// Back-propagates `dh` (`T × h`, gradient of the loss with respect to
    /// each emitted hidden state). Accumulates parameter gradients and
    /// returns `dL/dxs`.
    pub fn backward(&mut self, xs: &[f64], cache: &LstmDirectionCache, dh: &[f64], reverse: bool) -> Vec<f64> {
        let h = self.hidden;
        let d = self.input();
        let steps = cache.h.len() / h;
        let mut dxs = vec![0.0; steps * d];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        let wi = self.w_ih.value.data();
        let wh = self.w_hh.value.data();
        let dwi = self.w_ih.grad.data_mut();
        let dwh = self.w_hh.grad.data_mut();
        let db = self.bias.grad.data_mut();
        for k in (0..steps).rev() {
            let t = if reverse { steps - 1 - k } else { k };
            let prev = if k == 0 {
                None
            } else if reverse {
                Some(t + 1)
            } else {
                Some(t - 1)
            };
            let gates = &cache.gates[t * 4 * h..(t + 1) * 4 * h];
            for j in 0..h {
                let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                let tc = cache.tanh_c[t * h + j];
                let c_prev = prev.map_or(0.0, |p| cache.c[p * h + j]);
                let dh_total = dh[t * h + j] + dh_next[j];
                let dc = dh_total * o * (1.0 - tc * tc) + dc_next[j];
                dz[j] = dc * g * i * (1.0 - i);
                dz[h + j] = dc * c_prev * f * (1.0 - f);
                dz[2 * h + j] = dc * i * (1.0 - g * g);
                dz[3 * h + j] = dh_total * tc * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            let x = &xs[t * d..(t + 1) * d];
            let dx = &mut dxs[t * d..(t + 1) * d];
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            for r in 0..4 * h {
                let g = dz[r];
                if g == 0.0 {
                    continue;
                }
                db[r] += g;
                let wi_row = &wi[r * d..(r + 1) * d];
                let dwi_row = &mut dwi[r * d..(r + 1) * d];
                for j in 0..d {
                    dwi_row[j] += g * x[j];
                    dx[j] += g * wi_row[j];
                }
                if let Some(p) = prev {
                    let h_prev = &cache.h[p * h..(p + 1) * h];
                    let wh_row = &wh[r * h..(r + 1) * h];
                    let dwh_row = &mut dwh[r * h..(r + 1) * h];
                    for j in 0..h {
                        dwh_row[j] += g * h_prev[j];
                        dh_next[j] += g * wh_row[j];
                    }
                }
            }
        }
        dxs
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        vec![&self.w_ih, &self.w_hh, &self.bias]
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.w_ih, &mut self.w_hh, &mut self.bias]
    }
}

/// Bidirectional single-layer LSTM.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstm {
    pub forward: LstmCell,
    pub backward: LstmCell,
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    input: Vec<f64>,
    steps: usize,
    pub forward: LstmDirectionCache,
    pub backward: LstmDirectionCache,
}

impl BiLstm {
    pub fn new(name: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        Self {
            forward: LstmCell::new(&format!("{name}.fwd"), input, hidden, rng),
            backward: LstmCell::new(&format!("{name}.bwd"), input, hidden, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden()
    }

    pub fn input(&self) -> usize {
        self.forward.input()
    }

    /// Returns `T × 2h`: row `t` is `[h_fwd(t), h_bwd(t)]`.
    pub fn forward(&self, xs: &Tensor) -> Result<(Tensor, BiLstmCache)> {
        let steps = xs.rows();
        if steps == 0 || xs.is_empty() {
            return Err(NnError::EmptySequence);
        }
        check_len("input width", self.input(), xs.cols())?;
        let fwd = self.forward.forward(xs.data(), steps, false);
        let bwd = self.backward.forward(xs.data(), steps, true);
        let h = self.hidden();
        let mut out = Vec::with_capacity(steps * 2 * h);
        for t in 0..steps {
            out.extend_from_slice(&fwd.h[t * h..(t + 1) * h]);
            out.extend_from_slice(&bwd.h[t * h..(t + 1) * h]);
        }
        let out = Tensor::new(vec![steps, 2 * h], out).expect("shape");
        Ok((
            out,
            BiLstmCache {
                input: xs.data().to_vec(),
                steps,
                forward: fwd,
                backward: bwd,
            },
        ))
    }

    /// Runs each sequence independently.
    pub fn forward_many(&self, sequences: &[Tensor]) -> Result<Vec<Tensor>> {
        sequences.iter().map(|xs| self.forward(xs).map(|(out, _)| out)).collect()
    }

    /// `dout` is `T × 2h`; returns `dL/dX` as `T × d`.
    pub fn backward_pass(&mut self, cache: &BiLstmCache, dout: &[f64]) -> Vec<f64> {
        let h = self.hidden();
        let steps = cache.steps;
        let mut dh_f = Vec::with_capacity(steps * h);
        let mut dh_b = Vec::with_capacity(steps * h);
        for t in 0..steps {
            let row = &dout[t * 2 * h..(t + 1) * 2 * h];
            dh_f.extend_from_slice(&row[..h]);
            dh_b.extend_from_slice(&row[h..]);
        }
        let mut dx = self.forward.backward(&cache.input, &cache.forward, &dh_f, false);
        let dx_b = self.backward.backward(&cache.input, &cache.backward, &dh_b, true);
        dx.iter_mut().zip(dx_b).for_each(|(a, b)| *a += b);
        dx
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        let mut p = self.forward.parameters();
        p.extend(self.backward.parameters());
        p
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut p = self.forward.parameters_mut();
        p.extend(self.backward.parameters_mut());
        p
    }
}
