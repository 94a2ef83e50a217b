//! Post-hoc calibration: add a constant `γ` to every absent-class logit before
//! the argmax, and estimate `γ` from training data (ALG, PCV) or, as an upper
//! bound, from labeled test data (`γ*`).

mod pcv;

use std::fmt::{self, Write as _};

use ndarray::Array2;

use crate::analysis::nongt_group_means;
use crate::data::{LabelPartition, LabeledFeatures, LabeledLogits, LinearHead};
use crate::error::{Error, Result};
use crate::metrics::seen_unseen_curve;

pub use pcv::{estimate_gamma_pcv, estimate_gamma_pcv_with, select_balanced_gamma, PcvConvention, PcvOptions};

/// Per-row argmax of `logit_c + γ·1[c ∈ U]`; ties go to the lowest class index.
pub fn apply_gamma(logits: &LabeledLogits, partition: &LabelPartition, gamma: f64) -> Result<Vec<usize>> {
    logits.check_partition(partition)?;
    if !gamma.is_finite() {
        return Err(Error::invalid_arg(format!("gamma must be finite, got {gamma}")));
    }
    Ok(predict_shifted(logits.values(), partition, gamma))
}

fn predict_shifted(values: ndarray::ArrayView2<'_, f64>, partition: &LabelPartition, gamma: f64) -> Vec<usize> {
    values
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            let mut best_val = f64::NEG_INFINITY;
            for (c, &v) in row.iter().enumerate() {
                let v = if partition.is_seen(c) { v } else { v + gamma };
                if v > best_val {
                    best = c;
                    best_val = v;
                }
            }
            best
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GammaMethod {
    /// Average logit gap on training data.
    Alg,
    /// Pseudo cross-validation.
    Pcv,
    /// Chosen on labeled test data (upper bound).
    Star,
    Manual,
}

impl fmt::Display for GammaMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GammaMethod::Alg => "ALG",
            GammaMethod::Pcv => "PCV",
            GammaMethod::Star => "STAR",
            GammaMethod::Manual => "MANUAL",
        })
    }
}

/// One bootstrap repeat of pseudo cross-validation.
#[derive(Clone, Debug, PartialEq)]
pub struct PcvRepeat {
    pub gamma: f64,
    /// Accuracy of the fine-tuned pseudo group at `gamma`.
    pub acc_pseudo_seen: f64,
    /// Accuracy of the held-out pseudo group at `gamma`.
    pub acc_pseudo_absent: f64,
    /// Classes the pseudo model was fine-tuned on.
    pub pseudo_seen: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GammaDiagnostics {
    Alg {
        n_samples: usize,
        gap_mean: f64,
        gap_stddev: f64,
    },
    Pcv {
        repeats: Vec<PcvRepeat>,
    },
    Star {
        acc_y_y: f64,
        acc_s_y: f64,
        acc_u_y: f64,
    },
    Manual,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GammaEstimate {
    pub value: f64,
    pub method: GammaMethod,
    pub diagnostics: GammaDiagnostics,
}

impl GammaEstimate {
    pub fn manual(value: f64) -> Self {
        GammaEstimate {
            value,
            method: GammaMethod::Manual,
            diagnostics: GammaDiagnostics::Manual,
        }
    }

    /// Line-oriented `key=value` report.
    pub fn to_report(&self) -> String {
        let mut out = format!("method={}\ngamma={}\n", self.method, self.value);
        match &self.diagnostics {
            GammaDiagnostics::Alg {
                n_samples,
                gap_mean,
                gap_stddev,
            } => {
                let _ = writeln!(out, "n_samples={n_samples}");
                let _ = writeln!(out, "gap_mean={gap_mean}");
                let _ = writeln!(out, "gap_stddev={gap_stddev}");
            }
            GammaDiagnostics::Pcv { repeats } => {
                let _ = writeln!(out, "repeats={}", repeats.len());
                for (r, rep) in repeats.iter().enumerate() {
                    let classes: Vec<String> = rep.pseudo_seen.iter().map(|c| c.to_string()).collect();
                    let _ = writeln!(out, "repeat{r}_gamma={}", rep.gamma);
                    let _ = writeln!(out, "repeat{r}_acc_pseudo_seen={}", rep.acc_pseudo_seen);
                    let _ = writeln!(out, "repeat{r}_acc_pseudo_absent={}", rep.acc_pseudo_absent);
                    let _ = writeln!(out, "repeat{r}_pseudo_seen={}", classes.join(","));
                }
            }
            GammaDiagnostics::Star {
                acc_y_y,
                acc_s_y,
                acc_u_y,
            } => {
                let _ = writeln!(out, "acc_y_y={acc_y_y}");
                let _ = writeln!(out, "acc_s_y={acc_s_y}");
                let _ = writeln!(out, "acc_u_y={acc_u_y}");
            }
            GammaDiagnostics::Manual => {}
        }
        out
    }
}

/// Average logit gap: the mean over training samples of (mean non-GT seen
/// logit) minus (mean absent logit).
///
/// Every label must be a fine-tuning class and `|S| >= 2`.
pub fn estimate_gamma_alg(train_logits: &LabeledLogits, partition: &LabelPartition) -> Result<GammaEstimate> {
    train_logits.check_partition(partition)?;
    if partition.fine_tuning().len() < 2 {
        return Err(Error::invalid_input(
            "ALG needs at least two fine-tuning classes so every sample has a non-GT seen class",
        ));
    }
    if let Some((i, &y)) = train_logits
        .labels()
        .iter()
        .enumerate()
        .find(|(_, &y)| !partition.is_seen(y))
    {
        return Err(Error::invalid_input(format!(
            "training sample {i} has absent label {y}; ALG expects fine-tuning data only"
        )));
    }
    let per_sample = nongt_group_means(train_logits, partition)?;
    let n = per_sample.len();
    let mean_seen = per_sample.iter().map(|m| m.0).sum::<f64>() / n as f64;
    let mean_absent = per_sample.iter().map(|m| m.1).sum::<f64>() / n as f64;
    let gaps: Vec<f64> = per_sample.iter().map(|(s, u)| s - u).collect();
    let gap_mean = gaps.iter().sum::<f64>() / n as f64;
    let gap_stddev = if n > 1 {
        (gaps.iter().map(|g| (g - gap_mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(GammaEstimate {
        value: mean_seen - mean_absent,
        method: GammaMethod::Alg,
        diagnostics: GammaDiagnostics::Alg {
            n_samples: n,
            gap_mean,
            gap_stddev,
        },
    })
}

/// The `γ` maximizing `Acc_{Y/Y}` on labeled test data.
///
/// Candidates are one representative per interval of the exact seen-unseen
/// curve. Ties prefer the larger `min(Acc_{S/Y}, Acc_{U/Y})`, then the
/// smaller `γ`.
pub fn estimate_gamma_star(test_logits: &LabeledLogits, partition: &LabelPartition) -> Result<GammaEstimate> {
    let curve = seen_unseen_curve(test_logits, partition)?;
    let mut best: Option<(f64, f64, f64, usize)> = None;
    for k in 0..curve.points().len() {
        let acc = curve.overall_acc(k);
        let (s, u) = curve.points()[k];
        let balance = s.min(u);
        let gamma = curve.representative_gamma(k);
        let better = match best {
            None => true,
            Some((b_acc, b_bal, b_gamma, _)) => {
                acc > b_acc || (acc == b_acc && (balance > b_bal || (balance == b_bal && gamma < b_gamma)))
            }
        };
        if better {
            best = Some((acc, balance, gamma, k));
        }
    }
    let (acc, _, gamma, k) = best.expect("curve has at least one point");
    let (s, u) = curve.points()[k];
    Ok(GammaEstimate {
        value: gamma,
        method: GammaMethod::Star,
        diagnostics: GammaDiagnostics::Star {
            acc_y_y: acc,
            acc_s_y: s,
            acc_u_y: u,
        },
    })
}

/// Cosine-classifier prediction: logits are cosine similarities between each
/// feature row and each weight row, followed by the `γ` rule.
pub fn predict_cosine(
    features: &LabeledFeatures,
    head: &LinearHead,
    partition: &LabelPartition,
    gamma: f64,
) -> Result<Vec<usize>> {
    if head.num_classes() != partition.num_classes() {
        return Err(Error::Shape(format!(
            "head has {} classes but the partition has {}",
            head.num_classes(),
            partition.num_classes()
        )));
    }
    if features.dim() != head.dim() {
        return Err(Error::Shape(format!(
            "features have dimension {} but the head expects {}",
            features.dim(),
            head.dim()
        )));
    }
    if !gamma.is_finite() {
        return Err(Error::invalid_arg(format!("gamma must be finite, got {gamma}")));
    }
    let w = head.weights();
    let w_norms: Vec<f64> = w.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    if let Some(c) = w_norms.iter().position(|&n| n == 0.0) {
        return Err(Error::invalid_input(format!("weight row {c} has zero norm")));
    }
    let x = features.values();
    let mut cos = Array2::<f64>::zeros((x.nrows(), w.nrows()));
    for (i, row) in x.rows().into_iter().enumerate() {
        let xn = row.dot(&row).sqrt();
        if xn == 0.0 {
            return Err(Error::invalid_input(format!("feature row {i} has zero norm")));
        }
        for (c, wr) in w.rows().into_iter().enumerate() {
            cos[[i, c]] = row.dot(&wr) / (xn * w_norms[c]);
        }
    }
    Ok(predict_shifted(cos.view(), partition, gamma))
}
