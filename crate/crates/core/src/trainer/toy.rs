//! Two-dimensional Gaussian toy problem: pre-train a small MLP on every class,
//! fine-tune it on a shifted target domain restricted to a few classes, then
//! measure what happened to the absent ones.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand_distr::{Distribution, Normal};

use super::model::{Activation, MlpModel};
use super::sgd::{fine_tune, TrainConfig, TrainHistory, TrainMode};
use crate::analysis::{absent_binary_prob, delta_w_similarity, linear_cka, weight_norms, SimilarityReport, WeightNorms};
use crate::calibration::{estimate_gamma_alg, estimate_gamma_star, GammaEstimate};
use crate::data::{LabelPartition, LabeledFeatures, LinearHead};
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{acc_report, ausuc, seen_unseen_curve, AccReport};
use crate::ncm::{class_means, ncm_report};
use crate::rng::{derive_seed, rng_from_seed};

/// Standard deviation of the random head initialization before pre-training.
pub const HEAD_INIT_STDDEV: f64 = 0.1;
/// Fraction of generated samples per class used for training (rest is test).
pub const TRAIN_FRACTION: f64 = 0.8;

/// Default horizontal shift distance of the target domain.
pub const DEFAULT_SHIFT: f64 = 3.25;

#[derive(Clone, Debug, PartialEq)]
pub struct ToySpec {
    pub class_means: Vec<[f64; 2]>,
    pub stddev: f64,
    /// Horizontal offset of each class in the target domain.
    pub shift: Vec<f64>,
    pub samples_per_class: usize,
    pub fine_tuning_classes: Vec<usize>,
    pub activation: Activation,
}

impl Default for ToySpec {
    /// Four classes at (10,2), (10,3), (10,8), (10,7) with stddev 0.2. In the
    /// target domain classes 1 and 3 move right and classes 0 and 2 move left
    /// by the same distance; classes 0 and 1 are fine-tuned.
    fn default() -> Self {
        ToySpec {
            class_means: vec![[10.0, 2.0], [10.0, 3.0], [10.0, 8.0], [10.0, 7.0]],
            stddev: 0.2,
            shift: vec![-DEFAULT_SHIFT, DEFAULT_SHIFT, -DEFAULT_SHIFT, DEFAULT_SHIFT],
            samples_per_class: 100,
            fine_tuning_classes: vec![0, 1],
            activation: Activation::Linear,
        }
    }
}

impl ToySpec {
    pub fn num_classes(&self) -> usize {
        self.class_means.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_means.len() < 2 {
            return Err(Error::invalid_arg("toy spec needs at least two classes"));
        }
        if self.shift.len() != self.class_means.len() {
            return Err(Error::invalid_arg(format!(
                "{} shifts for {} classes",
                self.shift.len(),
                self.class_means.len()
            )));
        }
        if !(self.stddev.is_finite() && self.stddev >= 0.0) {
            return Err(Error::invalid_arg(format!("stddev must be nonnegative, got {}", self.stddev)));
        }
        if self.samples_per_class == 0 {
            return Err(Error::invalid_arg("samples_per_class must be positive"));
        }
        if self
            .class_means
            .iter()
            .flatten()
            .chain(&self.shift)
            .any(|v| !v.is_finite())
        {
            return Err(Error::invalid_arg("toy spec has non-finite means or shifts"));
        }
        self.partition()?;
        Ok(())
    }

    pub fn partition(&self) -> Result<LabelPartition> {
        LabelPartition::new(self.num_classes(), self.fine_tuning_classes.iter().copied())
    }

    pub fn to_text(&self) -> String {
        let means: Vec<String> = self.class_means.iter().map(|[x, y]| format!("{x}:{y}")).collect();
        let shift: Vec<String> = self.shift.iter().map(|s| s.to_string()).collect();
        let ft: Vec<String> = self.fine_tuning_classes.iter().map(|c| c.to_string()).collect();
        format!(
            "means={}\nstddev={}\nshift={}\nsamples_per_class={}\nfine_tuning={}\nactivation={}\n",
            means.join(";"),
            self.stddev,
            shift.join(","),
            self.samples_per_class,
            ft.join(","),
            self.activation
        )
    }
}

fn sample_domain(spec: &ToySpec, seed: u64, shifted: bool) -> Result<LabeledFeatures> {
    let noise = Normal::new(0.0, spec.stddev).map_err(|e| Error::invalid_arg(e.to_string()))?;
    let mut rng = rng_from_seed(seed);
    let n = spec.num_classes() * spec.samples_per_class;
    let mut values = Array2::<f64>::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    for (c, &[mx, my]) in spec.class_means.iter().enumerate() {
        let cx = if shifted { mx + spec.shift[c] } else { mx };
        for _ in 0..spec.samples_per_class {
            let r = labels.len();
            values[[r, 0]] = (cx + noise.sample(&mut rng)).max(0.0);
            values[[r, 1]] = (my + noise.sample(&mut rng)).max(0.0);
            labels.push(c);
        }
    }
    LabeledFeatures::new(values, labels)
}

/// Pre-training and target-domain samples, class-major, clamped at zero.
pub fn gen_toy_data(spec: &ToySpec, seed: u64) -> Result<(LabeledFeatures, LabeledFeatures)> {
    spec.validate()?;
    Ok((
        sample_domain(spec, derive_seed(seed, 0), false)?,
        sample_domain(spec, derive_seed(seed, 1), true)?,
    ))
}

/// Per-class split keeping the first `TRAIN_FRACTION` of each class for training.
pub fn train_test_split(data: &LabeledFeatures) -> (LabeledFeatures, LabeledFeatures) {
    let num_classes = data.labels().iter().max().map_or(0, |m| m + 1);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in 0..num_classes {
        let idx: Vec<usize> = (0..data.len()).filter(|&i| data.labels()[i] == c).collect();
        let n_train = ((idx.len() as f64) * TRAIN_FRACTION).round() as usize;
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    (data.select(&train), data.select(&test))
}

/// Everything the toy pipeline measured.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyReport {
    /// Target-domain test accuracies of the pre-trained model.
    pub pretrained: AccReport,
    /// Target-domain test accuracies of the fine-tuned model.
    pub finetuned: AccReport,
    /// Fine-tuned model calibrated with `γ*`.
    pub calibrated: AccReport,
    pub gamma_star: GammaEstimate,
    /// ALG on the fine-tuning training data; needs two or more fine-tuning classes.
    pub gamma_alg: Option<GammaEstimate>,
    pub ausuc_pretrained: f64,
    pub ausuc_finetuned: f64,
    pub delta_w_seen: Option<SimilarityReport>,
    pub delta_w_absent: Option<SimilarityReport>,
    pub norms_pretrained: WeightNorms,
    pub norms_finetuned: WeightNorms,
    /// CKA between the pre-trained and fine-tuned absent-class weights.
    pub cka_absent: Option<f64>,
    /// NCM on fine-tuned hidden features, means from the target training split.
    pub ncm_finetuned: AccReport,
    pub absent_prob_pretrained: f64,
    pub absent_prob_finetuned: f64,
    pub pretrain_history: TrainHistory,
    pub finetune_history: TrainHistory,
}

fn push_acc(out: &mut String, prefix: &str, r: &AccReport) {
    for line in r.to_report().lines() {
        let _ = writeln!(out, "{prefix}_{line}");
    }
}

impl ToyReport {
    pub fn to_report(&self) -> String {
        let mut out = String::new();
        push_acc(&mut out, "pretrained", &self.pretrained);
        push_acc(&mut out, "finetuned", &self.finetuned);
        push_acc(&mut out, "calibrated", &self.calibrated);
        let _ = writeln!(out, "gamma_star={}", self.gamma_star.value);
        if let Some(g) = &self.gamma_alg {
            let _ = writeln!(out, "gamma_alg={}", g.value);
        }
        let _ = writeln!(out, "ausuc_pretrained={}", self.ausuc_pretrained);
        let _ = writeln!(out, "ausuc_finetuned={}", self.ausuc_finetuned);
        if let Some(s) = &self.delta_w_seen {
            let _ = writeln!(out, "delta_w_seen_mean_offdiag={}", s.mean_offdiag);
        }
        if let Some(s) = &self.delta_w_absent {
            let _ = writeln!(out, "delta_w_absent_mean_offdiag={}", s.mean_offdiag);
        }
        let _ = writeln!(out, "pretrained_mean_seen_weight_norm={}", self.norms_pretrained.mean_seen_norm);
        let _ = writeln!(out, "pretrained_mean_absent_weight_norm={}", self.norms_pretrained.mean_absent_norm);
        let _ = writeln!(out, "finetuned_mean_seen_weight_norm={}", self.norms_finetuned.mean_seen_norm);
        let _ = writeln!(out, "finetuned_mean_absent_weight_norm={}", self.norms_finetuned.mean_absent_norm);
        if let Some(c) = self.cka_absent {
            let _ = writeln!(out, "cka_absent={c}");
        }
        push_acc(&mut out, "ncm_finetuned", &self.ncm_finetuned);
        let _ = writeln!(out, "absent_prob_pretrained={}", self.absent_prob_pretrained);
        let _ = writeln!(out, "absent_prob_finetuned={}", self.absent_prob_finetuned);
        if let (Some(first), Some(last)) = (self.finetune_history.epochs.first(), self.finetune_history.epochs.last()) {
            let _ = writeln!(out, "finetune_loss_first={}", first.loss);
            let _ = writeln!(out, "finetune_loss_last={}", last.loss);
        }
        out
    }
}

/// Config used for both phases of the default toy experiment: full SGD with
/// learning rate 0.01 for 100 epochs, mini-batches of 16, momentum 0.5.
pub fn toy_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 16,
        momentum: 0.5,
        mode: TrainMode::Full,
        seed,
        ..TrainConfig::default()
    }
}

/// Initial model: identity hidden map, small random head.
pub fn toy_initial_model(spec: &ToySpec, seed: u64) -> Result<MlpModel> {
    let init = Normal::new(0.0, HEAD_INIT_STDDEV).expect("valid stddev");
    let mut rng = rng_from_seed(seed);
    let head = Array2::from_shape_fn((spec.num_classes(), 2), |_| init.sample(&mut rng));
    MlpModel::new(Array2::eye(2), LinearHead::new(head)?, spec.activation)
}

/// Runs the full toy experiment.
///
/// `config.seed` is the master seed: data, head initialization and the two
/// training phases each get a derived stream. Both phases use `config.mode`:
/// pre-training starts from the identity hidden map and covers all classes,
/// fine-tuning continues on the target-domain training samples of the
/// fine-tuning classes. Reports are measured on the target-domain test split. When
/// `outdir` is given, all inputs, models, logits and reports are written there.
pub fn run_toy_pipeline(spec: &ToySpec, config: &TrainConfig, outdir: Option<&Path>) -> Result<ToyReport> {
    spec.validate()?;
    config.validate()?;
    let partition = spec.partition()?;
    let master = config.seed;

    let (pretrain_all, target_all) = gen_toy_data(spec, derive_seed(master, 0))?;
    let (pretrain_train, _pretrain_test) = train_test_split(&pretrain_all);
    let (target_train, target_test) = train_test_split(&target_all);
    let finetune_train = target_train.filter_labels(|y| partition.is_seen(y));

    let init = toy_initial_model(spec, derive_seed(master, 1))?;
    let all_classes: Vec<usize> = (0..spec.num_classes()).collect();
    let pre_cfg = TrainConfig {
        seed: derive_seed(master, 2),
        ..config.clone()
    };
    let (pretrained, pretrain_history) = fine_tune(&init, &pretrain_train, &all_classes, &pre_cfg)
        .map_err(|e| restage(e, "toy pre-training"))?;
    let ft_cfg = TrainConfig {
        seed: derive_seed(master, 3),
        ..config.clone()
    };
    let (finetuned, finetune_history) = fine_tune(&pretrained, &finetune_train, partition.fine_tuning(), &ft_cfg)
        .map_err(|e| restage(e, "toy fine-tuning"))?;

    let logits_pre = pretrained.logits(&target_test)?;
    let logits_ft = finetuned.logits(&target_test)?;
    let curve_pre = seen_unseen_curve(&logits_pre, &partition)?;
    let curve_ft = seen_unseen_curve(&logits_ft, &partition)?;
    let gamma_star = estimate_gamma_star(&logits_ft, &partition)?;
    let gamma_alg = if partition.fine_tuning().len() >= 2 {
        Some(estimate_gamma_alg(&finetuned.logits(&finetune_train)?, &partition)?)
    } else {
        None
    };

    let head_pre = pretrained.head();
    let head_ft = finetuned.head();
    let similarity = |classes: &[usize]| {
        if classes.len() >= 2 {
            delta_w_similarity(head_pre, head_ft, classes).ok()
        } else {
            None
        }
    };
    let delta_w_seen = similarity(partition.fine_tuning());
    let delta_w_absent = similarity(partition.absent());
    let cka_absent = if partition.absent().len() >= 2 {
        let rows = partition.absent();
        let a = head_pre.weights().select(ndarray::Axis(0), rows);
        let b = head_ft.weights().select(ndarray::Axis(0), rows);
        linear_cka(a.view(), b.view()).ok()
    } else {
        None
    };

    let hidden_train_ft = finetuned.hidden_features(&target_train)?;
    let hidden_test_ft = finetuned.hidden_features(&target_test)?;
    let means = class_means(&hidden_train_ft, &all_classes)?;

    let report = ToyReport {
        pretrained: acc_report(&logits_pre, &partition, 0.0)?,
        finetuned: acc_report(&logits_ft, &partition, 0.0)?,
        calibrated: acc_report(&logits_ft, &partition, gamma_star.value)?,
        gamma_star,
        gamma_alg,
        ausuc_pretrained: ausuc(&curve_pre),
        ausuc_finetuned: ausuc(&curve_ft),
        delta_w_seen,
        delta_w_absent,
        norms_pretrained: weight_norms(head_pre, &partition)?,
        norms_finetuned: weight_norms(head_ft, &partition)?,
        cka_absent,
        ncm_finetuned: ncm_report(&hidden_test_ft, &means, &partition)?,
        absent_prob_pretrained: absent_binary_prob(&logits_pre, &partition)?,
        absent_prob_finetuned: absent_binary_prob(&logits_ft, &partition)?,
        pretrain_history,
        finetune_history,
    };

    if let Some(dir) = outdir {
        let w = |name: &str, text: String| io::write_text(&dir.join(name), &text);
        w("toy_spec.txt", spec.to_text())?;
        w("config.txt", config.to_text())?;
        io::save_partition(&partition, &dir.join("partition.txt"))?;
        for (name, data) in [
            ("pretrain_train", &pretrain_train),
            ("target_train", &target_train),
            ("target_test", &target_test),
        ] {
            io::save_matrix(&data.values().to_owned(), &dir.join(format!("{name}_features.csv")))?;
            io::save_labels(data.labels(), &dir.join(format!("{name}_labels.txt")))?;
        }
        io::save_model(&pretrained, &dir.join("model_pretrained.txt"))?;
        io::save_model(&finetuned, &dir.join("model_finetuned.txt"))?;
        io::save_matrix(&head_pre.weights().to_owned(), &dir.join("head_pretrained.csv"))?;
        io::save_matrix(&head_ft.weights().to_owned(), &dir.join("head_finetuned.csv"))?;
        io::save_matrix(&logits_pre.values().to_owned(), &dir.join("logits_pretrained.csv"))?;
        io::save_matrix(&logits_ft.values().to_owned(), &dir.join("logits_finetuned.csv"))?;
        io::save_matrix(
            &pretrained.hidden_features(&target_test)?.values().to_owned(),
            &dir.join("hidden_pretrained.csv"),
        )?;
        io::save_matrix(&hidden_test_ft.values().to_owned(), &dir.join("hidden_finetuned.csv"))?;
        w("curve_pretrained.csv", curve_pre.to_csv())?;
        w("curve_finetuned.csv", curve_ft.to_csv())?;
        w("history_pretrain.csv", report.pretrain_history.to_csv())?;
        w("history_finetune.csv", report.finetune_history.to_csv())?;
        if let Some(s) = &report.delta_w_seen {
            io::save_matrix(&s.matrix, &dir.join("delta_w_seen.csv"))?;
        }
        if let Some(s) = &report.delta_w_absent {
            io::save_matrix(&s.matrix, &dir.join("delta_w_absent.csv"))?;
        }
        w("gamma_star.txt", report.gamma_star.to_report())?;
        if let Some(g) = &report.gamma_alg {
            w("gamma_alg.txt", g.to_report())?;
        }
        w("report.txt", report.to_report())?;
    }
    Ok(report)
}

fn restage(e: Error, stage: &str) -> Error {
    match e {
        Error::TrainingFailure { epoch, reason, .. } => Error::TrainingFailure {
            stage: stage.to_string(),
            epoch,
            reason,
        },
        other => other,
    }
}
