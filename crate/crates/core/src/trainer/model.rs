use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::data::{LabeledFeatures, LabeledLogits, LinearHead};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Activation {
    #[default]
    Linear,
    /// Elementwise `max(0, ·)` on the hidden layer.
    Rectified,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Linear => "linear",
            Activation::Rectified => "rectified",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Activation::Linear),
            "rectified" | "relu" => Ok(Activation::Rectified),
            other => Err(Error::invalid_arg(format!("unknown activation `{other}`"))),
        }
    }
}

/// Two-layer classifier: `logits = head · act(hidden_map · x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    hidden_map: Array2<f64>,
    head: LinearHead,
    activation: Activation,
}

/// Hidden activations and logits of one input.
#[derive(Clone, Debug, PartialEq)]
pub struct Forward {
    pub hidden: Array1<f64>,
    pub logits: Array1<f64>,
}

/// Cross-entropy loss of one sample and its gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGrads {
    pub loss: f64,
    pub probs: Array1<f64>,
    pub grad_head: Array2<f64>,
    pub grad_hidden_map: Array2<f64>,
}

impl MlpModel {
    pub fn new(hidden_map: Array2<f64>, head: LinearHead, activation: Activation) -> Result<Self> {
        if hidden_map.nrows() != head.dim() {
            return Err(Error::Shape(format!(
                "hidden map produces {} features but the head expects {}",
                hidden_map.nrows(),
                head.dim()
            )));
        }
        if hidden_map.ncols() == 0 {
            return Err(Error::Shape("hidden map has no input columns".into()));
        }
        if hidden_map.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_input("hidden map has non-finite entries"));
        }
        Ok(MlpModel {
            hidden_map,
            head,
            activation,
        })
    }

    pub fn hidden_map(&self) -> ArrayView2<'_, f64> {
        self.hidden_map.view()
    }

    pub fn head(&self) -> &LinearHead {
        &self.head
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.hidden_map.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_map.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.head.num_classes()
    }

    pub(crate) fn params_mut(&mut self) -> (&mut Array2<f64>, &mut Array2<f64>) {
        (&mut self.hidden_map, self.head.weights_mut())
    }

    fn check_input(&self, x: ArrayView1<'_, f64>) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::invalid_arg(format!(
                "input has dimension {} but the model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_input("input has non-finite entries"));
        }
        Ok(())
    }

    fn activate(&self, mut pre: Array1<f64>) -> Array1<f64> {
        if self.activation == Activation::Rectified {
            pre.mapv_inplace(|v| v.max(0.0));
        }
        pre
    }

    pub fn forward(&self, x: ArrayView1<'_, f64>) -> Result<Forward> {
        self.check_input(x)?;
        let hidden = self.activate(self.hidden_map.dot(&x));
        let logits = self.head.weights().dot(&hidden);
        Ok(Forward { hidden, logits })
    }

    /// Cross-entropy of the full softmax at label `y`, with analytic gradients
    /// for both weight matrices.
    pub fn loss_and_grads(&self, x: ArrayView1<'_, f64>, y: usize) -> Result<LossGrads> {
        if y >= self.num_classes() {
            return Err(Error::invalid_arg(format!(
                "label {y} out of range for {} classes",
                self.num_classes()
            )));
        }
        self.check_input(x)?;
        let pre = self.hidden_map.dot(&x);
        let hidden = self.activate(pre.clone());
        let w = self.head.weights();
        let logits = w.dot(&hidden);

        let m = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let z = logits.mapv(|v| (v - m).exp());
        let total = z.sum();
        let probs = z / total;
        let loss = m + total.ln() - logits[y];

        // dL/dlogit_c = p_c - 1[c = y]
        let mut residual = probs.clone();
        residual[y] -= 1.0;

        let grad_head = outer(residual.view(), hidden.view());
        let mut grad_hidden = w.t().dot(&residual);
        if self.activation == Activation::Rectified {
            for (g, &p) in grad_hidden.iter_mut().zip(pre.iter()) {
                if p <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        let grad_hidden_map = outer(grad_hidden.view(), x);
        Ok(LossGrads {
            loss,
            probs,
            grad_head,
            grad_hidden_map,
        })
    }

    /// Hidden activations for every row.
    pub fn hidden_features(&self, features: &LabeledFeatures) -> Result<LabeledFeatures> {
        self.check_dim(features)?;
        let pre = features.values().dot(&self.hidden_map.t());
        let hidden = match self.activation {
            Activation::Linear => pre,
            Activation::Rectified => pre.mapv(|v| v.max(0.0)),
        };
        LabeledFeatures::new(hidden, features.labels().to_vec())
    }

    /// Logits for every row, paired with the rows' labels.
    pub fn logits(&self, features: &LabeledFeatures) -> Result<LabeledLogits> {
        let hidden = self.hidden_features(features)?;
        let values = hidden.values().dot(&self.head.weights().t());
        LabeledLogits::new(values, features.labels().to_vec())
    }

    fn check_dim(&self, features: &LabeledFeatures) -> Result<()> {
        if features.dim() != self.input_dim() {
            return Err(Error::Shape(format!(
                "features have dimension {} but the model expects {}",
                features.dim(),
                self.input_dim()
            )));
        }
        Ok(())
    }
}

pub(crate) fn outer(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Array2<f64> {
    let col = a.insert_axis(Axis(1));
    let row = b.insert_axis(Axis(0));
    col.dot(&row)
}
