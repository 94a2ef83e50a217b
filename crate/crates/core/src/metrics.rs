//! The `Acc_{A/B}` accuracy family, softmax decomposition into seen/absent
//! parts, and the exact seen-unseen trade-off curve with its area (AUSUC).
//!
//! `Acc_{A/B}` is the accuracy on samples whose label lies in group `A` when
//! the argmax is restricted to the classes of group `B`.

use std::fmt::Write as _;

use ndarray::ArrayView1;

use crate::calibration::apply_gamma;
use crate::data::{Group, LabelPartition, LabeledLogits};
use crate::error::{Error, Result};

/// Argmax of `row` over `classes`; ties go to the lowest class index.
pub(crate) fn argmax_over(row: ArrayView1<'_, f64>, classes: &[usize]) -> usize {
    let mut best = classes[0];
    let mut best_val = row[best];
    for &c in &classes[1..] {
        let v = row[c];
        if v > best_val || (v == best_val && c < best) {
            best = c;
            best_val = v;
        }
    }
    best
}

/// Argmax over all entries; ties go to the lowest index.
pub(crate) fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (c, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = c;
        }
    }
    best
}

fn max_over(row: ArrayView1<'_, f64>, classes: &[usize]) -> f64 {
    classes.iter().map(|&c| row[c]).fold(f64::NEG_INFINITY, f64::max)
}

/// Per-row argmax restricted to the class set `restriction`.
pub fn predict_restricted(logits: &LabeledLogits, restriction: &[usize]) -> Result<Vec<usize>> {
    if restriction.is_empty() {
        return Err(Error::invalid_arg("restriction class set is empty"));
    }
    if let Some(&c) = restriction.iter().find(|&&c| c >= logits.num_classes()) {
        return Err(Error::invalid_arg(format!(
            "restriction class {c} out of range for {} classes",
            logits.num_classes()
        )));
    }
    Ok((0..logits.len())
        .map(|i| argmax_over(logits.row(i), restriction))
        .collect())
}

/// `Acc_{A/B}`: fraction of `A`-labeled samples whose `B`-restricted argmax
/// equals the label.
pub fn acc(logits: &LabeledLogits, partition: &LabelPartition, a: Group, b: Group) -> Result<f64> {
    logits.check_partition(partition)?;
    let restriction = partition.classes(b);
    let mut total = 0usize;
    let mut correct = 0usize;
    for (i, &y) in logits.labels().iter().enumerate() {
        if !partition.contains(a, y) {
            continue;
        }
        total += 1;
        if argmax_over(logits.row(i), restriction) == y {
            correct += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyGroup(format!("no samples labeled in group {a}")));
    }
    Ok(correct as f64 / total as f64)
}

/// The five accuracies of the `Acc_{A/B}` family plus group sizes.
///
/// Entries are `None` when the corresponding sample group is empty or the
/// predictions for that label space were not supplied.
#[derive(Clone, Debug, PartialEq)]
pub struct AccReport {
    pub acc_y_y: Option<f64>,
    pub acc_s_y: Option<f64>,
    pub acc_u_y: Option<f64>,
    pub acc_s_s: Option<f64>,
    pub acc_u_u: Option<f64>,
    pub n_total: usize,
    pub n_seen: usize,
    pub n_absent: usize,
}

fn fraction(correct: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| correct as f64 / total as f64)
}

impl AccReport {
    /// Builds the report from predictions restricted to `Y`, `S` and `U`
    /// respectively. Any of the three may be omitted.
    pub fn from_predictions(
        labels: &[usize],
        partition: &LabelPartition,
        pred_all: Option<&[usize]>,
        pred_seen: Option<&[usize]>,
        pred_absent: Option<&[usize]>,
    ) -> Result<Self> {
        for p in [pred_all, pred_seen, pred_absent].into_iter().flatten() {
            if p.len() != labels.len() {
                return Err(Error::Shape(format!(
                    "{} predictions for {} labels",
                    p.len(),
                    labels.len()
                )));
            }
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= partition.num_classes()) {
            return Err(Error::invalid_input(format!(
                "label {y} out of range for {} classes",
                partition.num_classes()
            )));
        }
        let n_seen = labels.iter().filter(|&&y| partition.is_seen(y)).count();
        let n_absent = labels.len() - n_seen;

        let count = |pred: &[usize], group: Group| {
            labels
                .iter()
                .zip(pred)
                .filter(|(&y, &p)| partition.contains(group, y) && p == y)
                .count()
        };

        Ok(AccReport {
            acc_y_y: pred_all.and_then(|p| fraction(count(p, Group::All), labels.len())),
            acc_s_y: pred_all.and_then(|p| fraction(count(p, Group::Seen), n_seen)),
            acc_u_y: pred_all.and_then(|p| fraction(count(p, Group::Absent), n_absent)),
            acc_s_s: pred_seen.and_then(|p| fraction(count(p, Group::Seen), n_seen)),
            acc_u_u: pred_absent.and_then(|p| fraction(count(p, Group::Absent), n_absent)),
            n_total: labels.len(),
            n_seen,
            n_absent,
        })
    }

    /// `key=value` lines; unavailable accuracies are omitted.
    pub fn to_report(&self) -> String {
        let mut out = String::new();
        for (key, value) in [
            ("acc_y_y", self.acc_y_y),
            ("acc_s_y", self.acc_s_y),
            ("acc_u_y", self.acc_u_y),
            ("acc_s_s", self.acc_s_s),
            ("acc_u_u", self.acc_u_u),
        ] {
            if let Some(v) = value {
                let _ = writeln!(out, "{key}={v}");
            }
        }
        let _ = writeln!(out, "n_total={}", self.n_total);
        let _ = writeln!(out, "n_seen={}", self.n_seen);
        let _ = writeln!(out, "n_absent={}", self.n_absent);
        out
    }
}

/// Full accuracy report for logits under calibration factor `gamma` (added to
/// every absent-class logit for the `Y`-restricted prediction). Within-group
/// accuracies do not depend on `gamma`.
pub fn acc_report(logits: &LabeledLogits, partition: &LabelPartition, gamma: f64) -> Result<AccReport> {
    logits.check_partition(partition)?;
    let pred_all = apply_gamma(logits, partition, gamma)?;
    let pred_seen = predict_restricted(logits, partition.fine_tuning())?;
    let pred_absent = predict_restricted(logits, partition.absent())?;
    AccReport::from_predictions(
        logits.labels(),
        partition,
        Some(&pred_all),
        Some(&pred_seen),
        Some(&pred_absent),
    )
}

/// Softmax split into the probability of the absent group and the
/// renormalized distributions within each group.
#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    pub p_absent: f64,
    /// Indexed like `partition.fine_tuning()`.
    pub within_seen: Vec<f64>,
    /// Indexed like `partition.absent()`.
    pub within_absent: Vec<f64>,
}

fn group_softmax(row: ArrayView1<'_, f64>, classes: &[usize]) -> Vec<f64> {
    let m = max_over(row, classes);
    let z: Vec<f64> = classes.iter().map(|&c| (row[c] - m).exp()).collect();
    let total: f64 = z.iter().sum();
    z.into_iter().map(|v| v / total).collect()
}

/// Max-shifted softmax of a single row.
pub fn softmax(row: ArrayView1<'_, f64>) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: Vec<f64> = row.iter().map(|&v| (v - m).exp()).collect();
    let total: f64 = z.iter().sum();
    z.into_iter().map(|v| v / total).collect()
}

/// Splits `softmax(logit_row)` so that `softmax_c = p_absent * within_U(c)`
/// for absent `c` and `(1 - p_absent) * within_S(c)` for seen `c`.
pub fn decompose(logit_row: ArrayView1<'_, f64>, partition: &LabelPartition) -> Result<Decomposition> {
    if logit_row.len() != partition.num_classes() {
        return Err(Error::Shape(format!(
            "row has {} entries but the partition has {} classes",
            logit_row.len(),
            partition.num_classes()
        )));
    }
    if logit_row.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid_input("logit row has non-finite entries"));
    }
    let m = logit_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    let mut absent = 0.0;
    for (c, &v) in logit_row.iter().enumerate() {
        let z = (v - m).exp();
        total += z;
        if !partition.is_seen(c) {
            absent += z;
        }
    }
    Ok(Decomposition {
        p_absent: absent / total,
        within_seen: group_softmax(logit_row, partition.fine_tuning()),
        within_absent: group_softmax(logit_row, partition.absent()),
    })
}

/// The exact staircase of `(Acc_{S/Y}(γ), Acc_{U/Y}(γ))` over every
/// calibration factor `γ`.
///
/// With `K` thresholds `t_0 < ... < t_{K-1}` there are `K + 1` points:
/// point `k` holds on the interval `(t_{k-1}, t_k]` (with `t_{-1} = -inf` and
/// `t_K = +inf`). A sample is predicted absent iff `γ` is strictly greater
/// than its threshold `max_S logit - max_U logit`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeenUnseenCurve {
    thresholds: Vec<f64>,
    points: Vec<(f64, f64)>,
    seen_correct: Vec<usize>,
    absent_correct: Vec<usize>,
    n_seen: usize,
    n_absent: usize,
    within_group_acc: (f64, f64),
}

impl SeenUnseenCurve {
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// `(Acc_{S/Y}, Acc_{U/Y})` per interval, in increasing `γ` order.
    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// `(Acc_{S/S}, Acc_{U/U})`.
    pub fn within_group_acc(&self) -> (f64, f64) {
        self.within_group_acc
    }

    pub fn n_seen(&self) -> usize {
        self.n_seen
    }

    pub fn n_absent(&self) -> usize {
        self.n_absent
    }

    /// Index of the interval containing `gamma`.
    pub fn interval_of(&self, gamma: f64) -> usize {
        self.thresholds.partition_point(|&t| t < gamma)
    }

    pub fn point_at(&self, gamma: f64) -> (f64, f64) {
        self.points[self.interval_of(gamma)]
    }

    /// `Acc_{Y/Y}` on interval `k` (every sample is either seen- or absent-labeled).
    pub fn overall_acc(&self, k: usize) -> f64 {
        (self.seen_correct[k] + self.absent_correct[k]) as f64 / (self.n_seen + self.n_absent) as f64
    }

    /// Open-interval bounds `(lo, hi]` of interval `k`.
    pub fn interval_bounds(&self, k: usize) -> (f64, f64) {
        let lo = if k == 0 { f64::NEG_INFINITY } else { self.thresholds[k - 1] };
        let hi = self.thresholds.get(k).copied().unwrap_or(f64::INFINITY);
        (lo, hi)
    }

    /// A `γ` strictly inside interval `k`, away from sample thresholds: zero
    /// when the interval contains zero, else the midpoint, else one logit
    /// unit beyond the outermost threshold.
    pub fn representative_gamma(&self, k: usize) -> f64 {
        let (lo, hi) = self.interval_bounds(k);
        if lo < 0.0 && 0.0 <= hi {
            0.0
        } else if lo.is_finite() && hi.is_finite() {
            lo + (hi - lo) / 2.0
        } else if hi.is_finite() {
            hi - 1.0
        } else {
            lo + 1.0
        }
    }

    /// CSV export: `gamma_threshold,acc_s_y,acc_u_y`, one row per interval,
    /// keyed by its left endpoint (`-inf` for the first).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("gamma_threshold,acc_s_y,acc_u_y\n");
        for (k, (s, u)) in self.points.iter().enumerate() {
            if k == 0 {
                let _ = writeln!(out, "-inf,{s},{u}");
            } else {
                let _ = writeln!(out, "{:.16e},{s},{u}", self.thresholds[k - 1]);
            }
        }
        out
    }
}

struct SampleFlip {
    threshold: f64,
    seen_label: bool,
    within_correct: bool,
}

fn sample_flips(logits: &LabeledLogits, partition: &LabelPartition) -> Result<(Vec<SampleFlip>, usize, usize)> {
    logits.check_partition(partition)?;
    let seen = partition.fine_tuning();
    let absent = partition.absent();
    let flips: Vec<SampleFlip> = logits
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let row = logits.row(i);
            let seen_label = partition.is_seen(y);
            let group = if seen_label { seen } else { absent };
            SampleFlip {
                threshold: max_over(row, seen) - max_over(row, absent),
                seen_label,
                within_correct: argmax_over(row, group) == y,
            }
        })
        .collect();
    let n_seen = flips.iter().filter(|f| f.seen_label).count();
    let n_absent = flips.len() - n_seen;
    if n_seen == 0 {
        return Err(Error::EmptyGroup("no seen-labeled samples".into()));
    }
    if n_absent == 0 {
        return Err(Error::EmptyGroup("no absent-labeled samples".into()));
    }
    Ok((flips, n_seen, n_absent))
}

/// Computes the exact seen-unseen curve by sorting per-sample flip thresholds.
pub fn seen_unseen_curve(logits: &LabeledLogits, partition: &LabelPartition) -> Result<SeenUnseenCurve> {
    let (flips, n_seen, n_absent) = sample_flips(logits, partition)?;

    let mut thresholds: Vec<f64> = flips.iter().map(|f| f.threshold).collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let k = thresholds.len();

    // Per threshold: correct seen samples that flip there, correct absent
    // samples that flip there.
    let mut seen_at = vec![0usize; k];
    let mut absent_at = vec![0usize; k];
    for f in flips.iter().filter(|f| f.within_correct) {
        let idx = thresholds.partition_point(|&t| t < f.threshold);
        if f.seen_label {
            seen_at[idx] += 1;
        } else {
            absent_at[idx] += 1;
        }
    }

    // Interval j = (t_{j-1}, t_j]: seen samples with threshold >= t_j remain
    // seen; absent samples with threshold <= t_{j-1} are predicted absent.
    let mut seen_correct = vec![0usize; k + 1];
    for j in (0..k).rev() {
        seen_correct[j] = seen_correct[j + 1] + seen_at[j];
    }
    let mut absent_correct = vec![0usize; k + 1];
    for j in 1..=k {
        absent_correct[j] = absent_correct[j - 1] + absent_at[j - 1];
    }

    let points = seen_correct
        .iter()
        .zip(&absent_correct)
        .map(|(&s, &u)| (s as f64 / n_seen as f64, u as f64 / n_absent as f64))
        .collect();

    Ok(SeenUnseenCurve {
        thresholds,
        points,
        within_group_acc: (
            seen_correct[0] as f64 / n_seen as f64,
            absent_correct[k] as f64 / n_absent as f64,
        ),
        seen_correct,
        absent_correct,
        n_seen,
        n_absent,
    })
}

/// Area under the seen-unseen staircase: the area of the union of the
/// rectangles `[0, acc_s] x [0, acc_u]` over all curve points.
pub fn ausuc(curve: &SeenUnseenCurve) -> f64 {
    let pts = curve.points();
    let mut area = 0.0;
    for (k, &(s, u)) in pts.iter().enumerate() {
        let next_s = pts.get(k + 1).map_or(0.0, |p| p.0);
        area += (s - next_s) * u;
    }
    area
}
