use std::fmt;
use std::str::FromStr;

use ndarray::Axis;
use rand::seq::SliceRandom;

use super::{GammaDiagnostics, GammaEstimate, GammaMethod, PcvRepeat};
use crate::data::{make_random_split, LabelPartition, LabeledFeatures, LabeledLogits};
use crate::error::{Error, Result};
use crate::metrics::{seen_unseen_curve, SeenUnseenCurve};
use crate::rng::{derive_seed, rng_from_seed};
use crate::trainer::{fine_tune, MlpModel, TrainConfig};

/// Fraction of each class held out as pseudo-validation.
pub const PCV_VAL_FRACTION: f64 = 0.2;

/// Which half of the pseudo split the pseudo model is fine-tuned on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PcvConvention {
    /// Fine-tune on the pseudo-seen classes; the rest play the absent role.
    #[default]
    PseudoSeen,
    /// Fine-tune on the other half instead.
    PseudoAbsent,
}

impl fmt::Display for PcvConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PcvConvention::PseudoSeen => "pseudo_seen",
            PcvConvention::PseudoAbsent => "pseudo_absent",
        })
    }
}

impl FromStr for PcvConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "pseudo_seen" => Ok(PcvConvention::PseudoSeen),
            "pseudo_absent" => Ok(PcvConvention::PseudoAbsent),
            _ => Err(Error::invalid_arg(format!("unknown PCV convention '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PcvOptions {
    pub repeats: usize,
    pub seed: u64,
    pub convention: PcvConvention,
}

/// `γ` balancing the two group accuracies on `curve`: minimizes
/// `|Acc_S - Acc_U|` over one representative per interval. Ties prefer the
/// smallest `|γ|`, then the smaller `γ`. Returns `(γ, interval index)`.
pub fn select_balanced_gamma(curve: &SeenUnseenCurve) -> (f64, usize) {
    let mut best: Option<(f64, f64, usize)> = None;
    for (k, &(s, u)) in curve.points().iter().enumerate() {
        let gap = (s - u).abs();
        let gamma = curve.representative_gamma(k);
        let better = match best {
            None => true,
            Some((b_gap, b_gamma, _)) => {
                gap < b_gap
                    || (gap == b_gap
                        && (gamma.abs() < b_gamma.abs() || (gamma.abs() == b_gamma.abs() && gamma < b_gamma)))
            }
        };
        if better {
            best = Some((gap, gamma, k));
        }
    }
    let (_, gamma, k) = best.expect("curve has at least one point");
    (gamma, k)
}

/// Pseudo cross-validation with the default convention.
pub fn estimate_gamma_pcv(
    train_features: &LabeledFeatures,
    pretrained: &MlpModel,
    partition: &LabelPartition,
    train_config: &TrainConfig,
    repeats: usize,
    seed: u64,
) -> Result<GammaEstimate> {
    let options = PcvOptions {
        repeats,
        seed,
        convention: PcvConvention::default(),
    };
    estimate_gamma_pcv_with(train_features, pretrained, partition, train_config, &options)
}

/// Pseudo cross-validation: per repeat, hold out 20% of every fine-tuning
/// class, split the fine-tuning classes in half at random, fine-tune a copy
/// of `pretrained` on one half, and pick the `γ` that balances the two halves
/// on the held-out samples with the label space restricted to the
/// fine-tuning classes. The estimate is the mean over repeats.
///
/// Repeat `r` draws from `derive_seed(seed, r)`, so results do not depend on
/// evaluation order.
pub fn estimate_gamma_pcv_with(
    train_features: &LabeledFeatures,
    pretrained: &MlpModel,
    partition: &LabelPartition,
    train_config: &TrainConfig,
    options: &PcvOptions,
) -> Result<GammaEstimate> {
    let seen = partition.fine_tuning();
    if seen.len() < 4 {
        return Err(Error::invalid_arg(format!(
            "PCV needs at least 4 fine-tuning classes, got {}",
            seen.len()
        )));
    }
    if options.repeats == 0 {
        return Err(Error::invalid_arg("PCV needs at least one repeat"));
    }
    if pretrained.num_classes() != partition.num_classes() {
        return Err(Error::Shape(format!(
            "model has {} classes but the partition has {}",
            pretrained.num_classes(),
            partition.num_classes()
        )));
    }
    if let Some((i, &y)) = train_features
        .labels()
        .iter()
        .enumerate()
        .find(|(_, &y)| !partition.is_seen(y))
    {
        return Err(Error::invalid_input(format!(
            "training sample {i} has label {y}, which is not a fine-tuning class"
        )));
    }
    train_config.validate()?;

    let repeats = (0..options.repeats)
        .map(|r| pcv_repeat(train_features, pretrained, seen, train_config, options, r))
        .collect::<Result<Vec<_>>>()?;
    let value = repeats.iter().map(|r| r.gamma).sum::<f64>() / repeats.len() as f64;
    Ok(GammaEstimate {
        value,
        method: GammaMethod::Pcv,
        diagnostics: GammaDiagnostics::Pcv { repeats },
    })
}

fn pcv_repeat(
    data: &LabeledFeatures,
    pretrained: &MlpModel,
    seen: &[usize],
    config: &TrainConfig,
    options: &PcvOptions,
    r: usize,
) -> Result<PcvRepeat> {
    let rseed = derive_seed(options.seed, r as u64);
    let (train_idx, val_idx) = stratified_split(data, seen, derive_seed(rseed, 0));

    let half = make_random_split(seen.len(), seen.len().div_ceil(2), derive_seed(rseed, 1))?;
    let pseudo_seen: Vec<usize> = half.fine_tuning().iter().map(|&i| seen[i]).collect();
    let tuned_local = match options.convention {
        PcvConvention::PseudoSeen => half.fine_tuning().to_vec(),
        PcvConvention::PseudoAbsent => half.absent().to_vec(),
    };
    let tuned: Vec<usize> = tuned_local.iter().map(|&i| seen[i]).collect();

    let pseudo_train = data.select(&train_idx).filter_labels(|y| tuned.contains(&y));
    let pseudo_val = data.select(&val_idx);
    let cfg = TrainConfig {
        seed: derive_seed(rseed, 2),
        ..config.clone()
    };
    let (model, _) = fine_tune(pretrained, &pseudo_train, &tuned, &cfg).map_err(|e| match e {
        Error::TrainingFailure { epoch, reason, .. } => Error::TrainingFailure {
            stage: format!("PCV repeat {r}"),
            epoch,
            reason,
        },
        other => other,
    })?;

    // Restrict the label space to S and renumber classes by position in S.
    let logits = model.logits(&pseudo_val)?;
    let restricted = logits.values().select(Axis(1), seen);
    let local_labels: Vec<usize> = logits
        .labels()
        .iter()
        .map(|y| seen.iter().position(|c| c == y).expect("labels are in S"))
        .collect();
    let local_logits = LabeledLogits::new(restricted, local_labels)?;
    let local_partition = LabelPartition::new(seen.len(), tuned_local)?;
    let curve = seen_unseen_curve(&local_logits, &local_partition)?;
    let (gamma, k) = select_balanced_gamma(&curve);
    let (acc_tuned, acc_held) = curve.points()[k];
    let (acc_pseudo_seen, acc_pseudo_absent) = match options.convention {
        PcvConvention::PseudoSeen => (acc_tuned, acc_held),
        PcvConvention::PseudoAbsent => (acc_held, acc_tuned),
    };
    Ok(PcvRepeat {
        gamma,
        acc_pseudo_seen,
        acc_pseudo_absent,
        pseudo_seen,
    })
}

/// Per-class shuffle-and-hold-out. Classes with one sample stay in training.
fn stratified_split(data: &LabeledFeatures, classes: &[usize], seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = rng_from_seed(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for &c in classes {
        let mut idx: Vec<usize> = (0..data.len()).filter(|&i| data.labels()[i] == c).collect();
        idx.shuffle(&mut rng);
        let n = idx.len();
        let n_val = if n >= 2 {
            ((n as f64 * PCV_VAL_FRACTION).round() as usize).clamp(1, n - 1)
        } else {
            0
        };
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}
