use std::fmt::{self, Write as _};
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;

use super::model::MlpModel;
use crate::data::LabeledFeatures;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Which parameters fine-tuning may update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TrainMode {
    /// Hidden map and head.
    #[default]
    Full,
    /// Head frozen; only the hidden map moves.
    FrozenClassifier,
    /// Hidden map frozen; only the head moves.
    LinearProbe,
}

impl TrainMode {
    fn updates_hidden_map(self) -> bool {
        self != TrainMode::LinearProbe
    }

    fn updates_head(self) -> bool {
        self != TrainMode::FrozenClassifier
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainMode::Full => "full",
            TrainMode::FrozenClassifier => "frozen_classifier",
            TrainMode::LinearProbe => "linear_probe",
        })
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(TrainMode::Full),
            "frozen_classifier" | "frozen-classifier" => Ok(TrainMode::FrozenClassifier),
            "linear_probe" | "linear-probe" => Ok(TrainMode::LinearProbe),
            other => Err(Error::invalid_arg(format!("unknown training mode `{other}`"))),
        }
    }
}

/// Mini-batch SGD settings.
///
/// Momentum follows `v <- momentum * v + g; p <- p - lr * v`. Weight decay is
/// decoupled: `p <- p - lr * weight_decay * p` alongside the gradient step.
/// Batch gradients are means over the batch.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub mode: TrainMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            momentum: 0.0,
            weight_decay: 0.0,
            epochs: 100,
            batch_size: 8,
            mode: TrainMode::Full,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::invalid_arg(format!(
                "learning_rate must be a nonnegative finite number, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid_arg(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::invalid_arg(format!(
                "weight_decay must be nonnegative, got {}",
                self.weight_decay
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid_arg("epochs and batch_size must be positive"));
        }
        Ok(())
    }

    /// Flat `key=value` representation, one field per line.
    pub fn to_text(&self) -> String {
        format!(
            "learning_rate={}\nmomentum={}\nweight_decay={}\nepochs={}\nbatch_size={}\nmode={}\nseed={}\n",
            self.learning_rate, self.momentum, self.weight_decay, self.epochs, self.batch_size, self.mode, self.seed
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean cross-entropy over the epoch's samples, measured before each batch update.
    pub loss: f64,
    /// Training accuracy over the full label space, measured alongside `loss`.
    pub accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,accuracy\n");
        for r in &self.epochs {
            let _ = writeln!(out, "{},{:.16e},{}", r.epoch, r.loss, r.accuracy);
        }
        out
    }
}

/// Fine-tunes a copy of `model` on `data` with the full softmax cross-entropy.
///
/// All labels must be in `allowed_classes`. Classes outside that set still
/// take part in the softmax and so only ever receive negative gradient.
pub fn fine_tune(
    model: &MlpModel,
    data: &LabeledFeatures,
    allowed_classes: &[usize],
    config: &TrainConfig,
) -> Result<(MlpModel, TrainHistory)> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::invalid_input("training set is empty"));
    }
    if data.dim() != model.input_dim() {
        return Err(Error::Shape(format!(
            "training inputs have dimension {} but the model expects {}",
            data.dim(),
            model.input_dim()
        )));
    }
    let mut allowed = vec![false; model.num_classes()];
    for &c in allowed_classes {
        if c >= allowed.len() {
            return Err(Error::invalid_arg(format!(
                "allowed class {c} out of range for {} classes",
                allowed.len()
            )));
        }
        allowed[c] = true;
    }
    if let Some((i, &y)) = data
        .labels()
        .iter()
        .enumerate()
        .find(|(_, &y)| y >= allowed.len() || !allowed[y])
    {
        return Err(Error::invalid_input(format!(
            "training sample {i} has label {y} outside the allowed classes"
        )));
    }

    let mut model = model.clone();
    let mut vel_hidden = Array2::<f64>::zeros(model.hidden_map().raw_dim());
    let mut vel_head = Array2::<f64>::zeros(model.head().weights().raw_dim());
    let mut rng = rng_from_seed(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = TrainHistory::default();
    let lr = config.learning_rate;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(config.batch_size) {
            let mut g_hidden = Array2::<f64>::zeros(vel_hidden.raw_dim());
            let mut g_head = Array2::<f64>::zeros(vel_head.raw_dim());
            for &i in batch {
                let y = data.labels()[i];
                let lg = model.loss_and_grads(data.row(i), y)?;
                if !lg.loss.is_finite() {
                    return Err(Error::TrainingFailure {
                        stage: "fine-tune".into(),
                        epoch,
                        reason: format!("non-finite loss on sample {i}"),
                    });
                }
                loss_sum += lg.loss;
                let pred = crate::metrics::argmax(lg.probs.view());
                if pred == y {
                    correct += 1;
                }
                g_hidden += &lg.grad_hidden_map;
                g_head += &lg.grad_head;
            }
            let scale = 1.0 / batch.len() as f64;
            let (hidden_map, head) = model.params_mut();
            if config.mode.updates_hidden_map() {
                sgd_step(hidden_map, &mut vel_hidden, &g_hidden, scale, lr, config);
            }
            if config.mode.updates_head() {
                sgd_step(head, &mut vel_head, &g_head, scale, lr, config);
            }
        }
        let loss = loss_sum / data.len() as f64;
        if !loss.is_finite() || model.hidden_map().iter().chain(model.head().weights().iter()).any(|v| !v.is_finite()) {
            return Err(Error::TrainingFailure {
                stage: "fine-tune".into(),
                epoch,
                reason: "parameters diverged".into(),
            });
        }
        history.epochs.push(EpochRecord {
            epoch,
            loss,
            accuracy: correct as f64 / data.len() as f64,
        });
    }
    Ok((model, history))
}

fn sgd_step(
    param: &mut Array2<f64>,
    velocity: &mut Array2<f64>,
    grad_sum: &Array2<f64>,
    scale: f64,
    lr: f64,
    config: &TrainConfig,
) {
    ndarray::Zip::from(param)
        .and(velocity)
        .and(grad_sum)
        .for_each(|p, v, &g| {
            *v = config.momentum * *v + g * scale;
            *p = *p - lr * config.weight_decay * *p - lr * *v;
        });
}
