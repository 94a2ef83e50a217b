use ndarray::{Array1, ArrayView1};

use super::model::{Activation, MlpModel};
use crate::error::{Error, Result};

/// Predicted and observed change of an absent input's hidden features after
/// one plain SGD step (no momentum, no decay) on a single seen example.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureShift {
    pub predicted: Array1<f64>,
    pub actual: Array1<f64>,
}

/// The closed form `-lr * Σ_j (p_j - 1[j = y]) w_j (xᵀx')` against the change
/// actually produced by updating the hidden map with the analytic gradient.
/// Only valid for linear activation.
pub fn absent_feature_shift(
    model: &MlpModel,
    seen_example: (ArrayView1<'_, f64>, usize),
    absent_input: ArrayView1<'_, f64>,
    learning_rate: f64,
) -> Result<FeatureShift> {
    if model.activation() != Activation::Linear {
        return Err(Error::UnsupportedMode(
            "the closed-form feature shift assumes linear activation".into(),
        ));
    }
    let (x, y) = seen_example;
    let grads = model.loss_and_grads(x, y)?;
    let before = model.forward(absent_input)?.hidden;

    let mut residual = grads.probs.clone();
    residual[y] -= 1.0;
    let overlap = x.dot(&absent_input);
    let predicted = model.head().weights().t().dot(&residual) * (-learning_rate * overlap);

    let updated = &model.hidden_map() - &(&grads.grad_hidden_map * learning_rate);
    let after = updated.dot(&absent_input);
    Ok(FeatureShift {
        predicted,
        actual: after - before,
    })
}
