use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::model::{Activation, MlpModel};
use crate::data::LinearHead;
use crate::error::Result;
use crate::rng::{derive_seed, rng_from_seed};

/// Step used for central differences.
pub const FD_STEP: f64 = 1e-5;
/// Largest acceptable relative error between analytic and numeric gradients.
pub const GRADCHECK_TOLERANCE: f64 = 1e-6;
/// Denominator floor of the relative error, so entries whose true gradient is
/// zero are compared absolutely.
pub const REL_ERROR_FLOOR: f64 = 1e-3;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Max relative error over every parameter between `loss_and_grads` and
/// central finite differences of the loss with step `h`.
pub fn finite_difference_error(model: &MlpModel, x: &Array1<f64>, y: usize, h: f64) -> Result<f64> {
    let analytic = model.loss_and_grads(x.view(), y)?;
    let hidden = model.hidden_map().to_owned();
    let head = model.head().weights().to_owned();
    let loss_with = |hm: Array2<f64>, w: Array2<f64>| -> Result<f64> {
        let m = MlpModel::new(hm, LinearHead::new(w)?, model.activation())?;
        Ok(m.loss_and_grads(x.view(), y)?.loss)
    };

    let mut worst = 0.0f64;
    for idx in ndarray::indices(hidden.dim()) {
        let mut plus = hidden.clone();
        plus[idx] += h;
        let mut minus = hidden.clone();
        minus[idx] -= h;
        let numeric = (loss_with(plus, head.clone())? - loss_with(minus, head.clone())?) / (2.0 * h);
        worst = worst.max(relative_error(analytic.grad_hidden_map[idx], numeric));
    }
    for idx in ndarray::indices(head.dim()) {
        let mut plus = head.clone();
        plus[idx] += h;
        let mut minus = head.clone();
        minus[idx] -= h;
        let numeric = (loss_with(hidden.clone(), plus)? - loss_with(hidden.clone(), minus)?) / (2.0 * h);
        worst = worst.max(relative_error(analytic.grad_head[idx], numeric));
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub pairs: usize,
    pub max_rel_error: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRADCHECK_TOLERANCE
    }

    pub fn to_report(&self) -> String {
        format!(
            "pairs={}\nmax_rel_error={:e}\ntolerance={:e}\npassed={}\n",
            self.pairs,
            self.max_rel_error,
            GRADCHECK_TOLERANCE,
            self.passed()
        )
    }
}

/// A random small model and sample. Rectified instances are redrawn until no
/// pre-activation lies within `10 * FD_STEP`-scale distance of the kink.
pub fn random_instance(seed: u64) -> (MlpModel, Array1<f64>, usize) {
    let mut rng = rng_from_seed(seed);
    let d_in = rng.random_range(1..=4);
    let d_h = rng.random_range(1..=4);
    let c = rng.random_range(2..=5);
    let activation = if rng.random_bool(0.5) {
        Activation::Linear
    } else {
        Activation::Rectified
    };
    loop {
        let hm: Array2<f64> = Array2::from_shape_fn((d_h, d_in), |_| StandardNormal.sample(&mut rng));
        let w: Array2<f64> = Array2::from_shape_fn((c, d_h), |_| StandardNormal.sample(&mut rng));
        let x: Array1<f64> = Array1::from_shape_fn(d_in, |_| StandardNormal.sample(&mut rng));
        let y = rng.random_range(0..c);
        if activation == Activation::Rectified && hm.dot(&x).iter().any(|v| v.abs() < 1e-2) {
            continue;
        }
        let model = MlpModel::new(hm, LinearHead::new(w).expect("c >= 2"), activation).expect("shapes agree");
        return (model, x, y);
    }
}

/// Gradient check over `pairs` random (model, sample) pairs derived from `seed`.
pub fn random_gradcheck(seed: u64, pairs: usize) -> Result<GradcheckReport> {
    let mut worst = 0.0f64;
    for k in 0..pairs {
        let (model, x, y) = random_instance(derive_seed(seed, k as u64));
        worst = worst.max(finite_difference_error(&model, &x, y, FD_STEP)?);
    }
    Ok(GradcheckReport {
        pairs,
        max_rel_error: worst,
    })
}
