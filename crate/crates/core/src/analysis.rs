//! Weight-space and logit-space diagnostics of a fine-tuned classifier.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};

use crate::data::{Group, LabelPartition, LabeledLogits, LinearHead};
use crate::error::{Error, Result};
use crate::metrics::decompose;

fn row_normalized(m: ArrayView2<'_, f64>, what: &str) -> Result<Array2<f64>> {
    let mut out = m.to_owned();
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let n = row.dot(&row).sqrt();
        if n == 0.0 {
            return Err(Error::Degenerate(format!("{what} row {i} has zero norm")));
        }
        row /= n;
    }
    Ok(out)
}

/// Double-centered Gram matrix `H X Xᵀ H`.
fn centered_gram(x: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let mut k = x.dot(&x.t());
    let row_means: Vec<f64> = k.rows().into_iter().map(|r| r.sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..n {
            // K is symmetric, so column means equal row means.
            k[[i, j]] += grand - row_means[i] - row_means[j];
        }
    }
    k
}

fn hsic(kc: &Array2<f64>, lc: &Array2<f64>) -> f64 {
    let n = kc.nrows() as f64;
    kc.iter().zip(lc.iter()).map(|(a, b)| a * b).sum::<f64>() / ((n - 1.0) * (n - 1.0))
}

/// Linear CKA between the class-relationship Grams of two weight matrices
/// (rows are L2-normalized first), using the biased centered HSIC.
pub fn linear_cka(weights_a: ArrayView2<'_, f64>, weights_b: ArrayView2<'_, f64>) -> Result<f64> {
    if weights_a.nrows() != weights_b.nrows() {
        return Err(Error::Shape(format!(
            "CKA inputs have {} and {} rows",
            weights_a.nrows(),
            weights_b.nrows()
        )));
    }
    if weights_a.nrows() < 2 {
        return Err(Error::invalid_arg("CKA needs at least two rows"));
    }
    let a = row_normalized(weights_a, "first matrix")?;
    let b = row_normalized(weights_b, "second matrix")?;
    let kc = centered_gram(&a);
    let lc = centered_gram(&b);
    let kk = hsic(&kc, &kc);
    let ll = hsic(&lc, &lc);
    if kk <= 0.0 || ll <= 0.0 {
        return Err(Error::Degenerate(
            "a Gram matrix has zero variance after centering (all rows identical)".into(),
        ));
    }
    Ok(hsic(&kc, &lc) / (kk * ll).sqrt())
}

/// Pairwise cosine similarities of class vectors within a subset.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityReport {
    pub matrix: Array2<f64>,
    pub mean_offdiag: f64,
    pub subset: Vec<usize>,
}

impl SimilarityReport {
    pub fn to_report(&self) -> String {
        let subset: Vec<String> = self.subset.iter().map(|c| c.to_string()).collect();
        format!("subset={}\nmean_offdiag={}\n", subset.join(","), self.mean_offdiag)
    }
}

/// Similarity of per-class update directions `(w_ft,c - w_pre,c) / ‖·‖₂`
/// between two heads, restricted to `subset` (at least two classes).
pub fn delta_w_similarity(w_pre: &LinearHead, w_ft: &LinearHead, subset: &[usize]) -> Result<SimilarityReport> {
    if w_pre.weights().dim() != w_ft.weights().dim() {
        return Err(Error::Shape(format!(
            "heads have shapes {:?} and {:?}",
            w_pre.weights().dim(),
            w_ft.weights().dim()
        )));
    }
    if subset.len() < 2 {
        return Err(Error::invalid_arg("similarity subset needs at least two classes"));
    }
    if let Some(&c) = subset.iter().find(|&&c| c >= w_pre.num_classes()) {
        return Err(Error::invalid_arg(format!("class {c} out of range")));
    }
    let d = w_pre.dim();
    let mut deltas = Array2::<f64>::zeros((subset.len(), d));
    for (r, &c) in subset.iter().enumerate() {
        let mut row = deltas.row_mut(r);
        row.assign(&(&w_ft.weights().row(c) - &w_pre.weights().row(c)));
        let n = row.dot(&row).sqrt();
        if n == 0.0 {
            return Err(Error::Degenerate(format!("class {c} has a zero weight update")));
        }
        row /= n;
    }
    let matrix = deltas.dot(&deltas.t()).mapv(|v| v.clamp(-1.0, 1.0));
    let k = subset.len();
    let mut off = 0.0;
    for i in 0..k {
        for j in 0..k {
            if i != j {
                off += matrix[[i, j]];
            }
        }
    }
    Ok(SimilarityReport {
        matrix,
        mean_offdiag: off / (k * (k - 1)) as f64,
        subset: subset.to_vec(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightNorms {
    pub mean_seen_norm: f64,
    pub mean_absent_norm: f64,
}

/// Mean row L2 norm of the head within each group.
pub fn weight_norms(head: &LinearHead, partition: &LabelPartition) -> Result<WeightNorms> {
    if head.num_classes() != partition.num_classes() {
        return Err(Error::Shape(format!(
            "head has {} classes but the partition has {}",
            head.num_classes(),
            partition.num_classes()
        )));
    }
    let w = head.weights();
    let mean_norm = |classes: &[usize]| {
        classes
            .iter()
            .map(|&c| {
                let r = w.row(c);
                r.dot(&r).sqrt()
            })
            .sum::<f64>()
            / classes.len() as f64
    };
    Ok(WeightNorms {
        mean_seen_norm: mean_norm(partition.fine_tuning()),
        mean_absent_norm: mean_norm(partition.absent()),
    })
}

/// Per sample: (mean non-GT seen logit, mean non-GT absent logit). The GT
/// column is excluded only from its own group.
pub(crate) fn nongt_group_means(logits: &LabeledLogits, partition: &LabelPartition) -> Result<Vec<(f64, f64)>> {
    logits.check_partition(partition)?;
    let group_mean = |i: usize, group: Group, y: usize| -> Result<f64> {
        let row = logits.row(i);
        let mut sum = 0.0;
        let mut count = 0usize;
        for &c in partition.classes(group) {
            if c != y {
                sum += row[c];
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::invalid_input(format!(
                "sample {i} (label {y}) has no non-GT class in group {group}"
            )));
        }
        Ok(sum / count as f64)
    };
    logits
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &y)| Ok((group_mean(i, Group::Seen, y)?, group_mean(i, Group::Absent, y)?)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogitGapStats {
    pub mean_nongt_seen: f64,
    pub mean_nongt_absent: f64,
}

/// Average non-GT logits of each group, averaged per sample then over samples.
pub fn logit_gap_stats(logits: &LabeledLogits, partition: &LabelPartition) -> Result<LogitGapStats> {
    let per_sample = nongt_group_means(logits, partition)?;
    let n = per_sample.len() as f64;
    Ok(LogitGapStats {
        mean_nongt_seen: per_sample.iter().map(|m| m.0).sum::<f64>() / n,
        mean_nongt_absent: per_sample.iter().map(|m| m.1).sum::<f64>() / n,
    })
}

/// Mean probability mass assigned to the absent group on absent-labeled samples.
pub fn absent_binary_prob(logits: &LabeledLogits, partition: &LabelPartition) -> Result<f64> {
    logits.check_partition(partition)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, &y) in logits.labels().iter().enumerate() {
        if !partition.is_seen(y) {
            sum += decompose(logits.row(i), partition)?.p_absent;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyGroup("no absent-labeled samples".into()));
    }
    Ok(sum / count as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GtVsTopAbsent {
    pub mean_gt_logit: f64,
    pub mean_max_nongt_absent_logit: f64,
}

/// On absent-labeled samples: mean GT logit and mean of the largest absent
/// logit other than the GT.
pub fn gt_vs_top_nongt_absent(logits: &LabeledLogits, partition: &LabelPartition) -> Result<GtVsTopAbsent> {
    logits.check_partition(partition)?;
    if partition.absent().len() < 2 {
        return Err(Error::invalid_input("needs at least two absent classes"));
    }
    let mut gt_sum = 0.0;
    let mut top_sum = 0.0;
    let mut count = 0usize;
    for (i, &y) in logits.labels().iter().enumerate() {
        if partition.is_seen(y) {
            continue;
        }
        let row = logits.row(i);
        gt_sum += row[y];
        top_sum += partition
            .absent()
            .iter()
            .filter(|&&c| c != y)
            .map(|&c| row[c])
            .fold(f64::NEG_INFINITY, f64::max);
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyGroup("no absent-labeled samples".into()));
    }
    Ok(GtVsTopAbsent {
        mean_gt_logit: gt_sum / count as f64,
        mean_max_nongt_absent_logit: top_sum / count as f64,
    })
}

/// Bundle of logit and weight diagnostics for one model on one dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnoseReport {
    pub weight_norms: WeightNorms,
    pub logit_gaps: LogitGapStats,
    pub absent_binary_prob: f64,
    pub gt_vs_top: GtVsTopAbsent,
}

impl DiagnoseReport {
    pub fn to_report(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "mean_seen_weight_norm={}", self.weight_norms.mean_seen_norm);
        let _ = writeln!(out, "mean_absent_weight_norm={}", self.weight_norms.mean_absent_norm);
        let _ = writeln!(out, "mean_nongt_seen_logit={}", self.logit_gaps.mean_nongt_seen);
        let _ = writeln!(out, "mean_nongt_absent_logit={}", self.logit_gaps.mean_nongt_absent);
        let _ = writeln!(out, "absent_binary_prob={}", self.absent_binary_prob);
        let _ = writeln!(out, "mean_gt_absent_logit={}", self.gt_vs_top.mean_gt_logit);
        let _ = writeln!(
            out,
            "mean_max_nongt_absent_logit={}",
            self.gt_vs_top.mean_max_nongt_absent_logit
        );
        out
    }
}

pub fn diagnose(logits: &LabeledLogits, partition: &LabelPartition, head: &LinearHead) -> Result<DiagnoseReport> {
    Ok(DiagnoseReport {
        weight_norms: weight_norms(head, partition)?,
        logit_gaps: logit_gap_stats(logits, partition)?,
        absent_binary_prob: absent_binary_prob(logits, partition)?,
        gt_vs_top: gt_vs_top_nongt_absent(logits, partition)?,
    })
}
