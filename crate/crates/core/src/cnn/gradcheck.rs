//! Central-difference verification of analytic gradients (64-bit).

use super::layers::Tensor;
use super::model::{CnnModel, Grads};
use super::CnnError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;

/// `|a − n| / max(|a| + |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    /// (parameter tensor, element) with the largest error.
    pub worst: (usize, usize),
    pub checked: usize,
}

/// Compares every analytic partial with a central difference, dropout off.
pub fn gradient_check(
    model: &CnnModel<f64>,
    input: &Tensor<f64>,
    label: usize,
) -> Result<GradientCheck, CnnError> {
    gradient_check_with(model, input, label, None, |_| {})
}

/// As [`gradient_check`], with two hooks: `dropout_seed` replays the same
/// dropout mask in every forward pass, and `tamper` edits the analytic
/// gradients before comparison.
pub fn gradient_check_with(
    model: &CnnModel<f64>,
    input: &Tensor<f64>,
    label: usize,
    dropout_seed: Option<u64>,
    tamper: impl FnOnce(&mut Grads<f64>),
) -> Result<GradientCheck, CnnError> {
    let rng = || dropout_seed.map(ChaCha8Rng::seed_from_u64);
    let loss_of = |m: &CnnModel<f64>| m.loss(input, label, rng().as_mut());

    let (_, _, mut grads) = model.example_gradients(input, label, rng().as_mut())?;
    tamper(&mut grads);

    let mut probe = model.clone();
    let mut result = GradientCheck {
        max_relative_error: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    let shapes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
    for (t, &len) in shapes.iter().enumerate() {
        for i in 0..len {
            let original = probe.params()[t][i];
            probe.params_mut()[t][i] = original + STEP;
            let plus = loss_of(&probe)?;
            probe.params_mut()[t][i] = original - STEP;
            let minus = loss_of(&probe)?;
            probe.params_mut()[t][i] = original;
            let numeric = (plus - minus) / (2.0 * STEP);
            let err = relative_error(grads.tensors[t][i], numeric);
            if err > result.max_relative_error {
                result.max_relative_error = err;
                result.worst = (t, i);
            }
            result.checked += 1;
        }
    }
    Ok(result)
}
