use super::{Parameter, Rng};

pub const DEFAULT_GRAD_CHECK_STEP: f64 = 1e-5;
pub const MAX_COORDS_PER_PARAM: usize = 200;

/// Something with a deterministic scalar loss over a set of parameters.
pub trait GradCheck {
    fn parameters_mut(&mut self) -> Vec<&mut Parameter>;

    /// Loss at the current parameter values; must not touch gradients.
    fn loss(&self) -> f64;

    /// Loss at the current parameter values, accumulating analytic
    /// gradients into each parameter's `grad`.
    fn loss_and_grad(&mut self) -> f64;
}

/// Maximum relative error between analytic and central-difference
/// gradients over at most [`MAX_COORDS_PER_PARAM`] sampled coordinates
/// of every parameter.
pub fn grad_check<T: GradCheck + ?Sized>(target: &mut T, h: f64, rng: &mut Rng) -> f64 {
    for p in target.parameters_mut() {
        p.zero_grad();
    }
    target.loss_and_grad();
    let analytic: Vec<Vec<f64>> = target
        .parameters_mut()
        .iter()
        .map(|p| p.grad.data().to_vec())
        .collect();

    let mut worst = 0.0f64;
    for (pi, grads) in analytic.iter().enumerate() {
        let mut coords: Vec<usize> = (0..grads.len()).collect();
        if coords.len() > MAX_COORDS_PER_PARAM {
            rng.shuffle(&mut coords);
            coords.truncate(MAX_COORDS_PER_PARAM);
        }
        for j in coords {
            let original = target.parameters_mut()[pi].value.data()[j];
            target.parameters_mut()[pi].value.data_mut()[j] = original + h;
            let plus = target.loss();
            target.parameters_mut()[pi].value.data_mut()[j] = original - h;
            let minus = target.loss();
            target.parameters_mut()[pi].value.data_mut()[j] = original;
            let numeric = (plus - minus) / (2.0 * h);
            let a = grads[j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
            worst = worst.max(err);
        }
    }
    for p in target.parameters_mut() {
        p.zero_grad();
    }
    worst
}
