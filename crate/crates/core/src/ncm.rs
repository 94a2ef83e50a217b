//! Nearest class mean classification over L2-normalized features.
//!
//! Used to judge feature quality independently of the linear head: class
//! means come from a held-out labeled set, evaluation happens on another.

use ndarray::{Array1, Array2, ArrayView1};

use crate::data::{LabelPartition, LabeledFeatures};
use crate::error::{Error, Result};
use crate::metrics::AccReport;

/// Per-class means of unit-normalized features. Means are not re-normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassMeans {
    means: Array2<f64>,
    class_ids: Vec<usize>,
    counts: Vec<usize>,
}

impl ClassMeans {
    pub fn means(&self) -> &Array2<f64> {
        &self.means
    }

    pub fn class_ids(&self) -> &[usize] {
        &self.class_ids
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn mean_of(&self, class: usize) -> Option<ArrayView1<'_, f64>> {
        self.class_ids.iter().position(|&c| c == class).map(|r| self.means.row(r))
    }
}

fn unit(row: ArrayView1<'_, f64>, i: usize) -> Result<Array1<f64>> {
    let n = row.dot(&row).sqrt();
    if n == 0.0 {
        return Err(Error::invalid_input(format!("feature row {i} has zero norm")));
    }
    Ok(&row / n)
}

/// Means of normalized features for each class in `classes` (sorted, deduplicated).
pub fn class_means(features: &LabeledFeatures, classes: &[usize]) -> Result<ClassMeans> {
    let mut class_ids = classes.to_vec();
    class_ids.sort_unstable();
    class_ids.dedup();
    let d = features.dim();
    let mut means = Array2::<f64>::zeros((class_ids.len(), d));
    let mut counts = vec![0usize; class_ids.len()];
    for (i, &y) in features.labels().iter().enumerate() {
        if let Ok(r) = class_ids.binary_search(&y) {
            let u = unit(features.row(i), i)?;
            let mut m = means.row_mut(r);
            m += &u;
            counts[r] += 1;
        }
    }
    for (r, &c) in class_ids.iter().enumerate() {
        if counts[r] == 0 {
            return Err(Error::MissingClass(c));
        }
        let n = counts[r] as f64;
        means.row_mut(r).mapv_inplace(|v| v / n);
    }
    Ok(ClassMeans {
        means,
        class_ids,
        counts,
    })
}

/// Per-row nearest mean among classes in `restriction`; ties go to the lowest
/// class index.
pub fn ncm_predict(features: &LabeledFeatures, means: &ClassMeans, restriction: &[usize]) -> Result<Vec<usize>> {
    if restriction.is_empty() {
        return Err(Error::invalid_arg("restriction class set is empty"));
    }
    if features.dim() != means.means.ncols() {
        return Err(Error::Shape(format!(
            "features have dimension {} but class means have {}",
            features.dim(),
            means.means.ncols()
        )));
    }
    let mut rows: Vec<(usize, usize)> = Vec::with_capacity(restriction.len());
    for &c in restriction {
        let r = means
            .class_ids
            .binary_search(&c)
            .map_err(|_| Error::MissingClass(c))?;
        rows.push((c, r));
    }
    rows.sort_unstable();
    rows.dedup();

    (0..features.len())
        .map(|i| {
            let x = unit(features.row(i), i)?;
            let mut best = rows[0].0;
            let mut best_d = f64::INFINITY;
            for &(c, r) in &rows {
                let d: f64 = x
                    .iter()
                    .zip(means.means.row(r))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            Ok(best)
        })
        .collect()
}

/// Accuracy report for NCM predictions. Only restrictions whose classes all
/// have means are evaluated; the rest stay `None`.
pub fn ncm_report(eval: &LabeledFeatures, means: &ClassMeans, partition: &LabelPartition) -> Result<AccReport> {
    let covered = |classes: &[usize]| classes.iter().all(|c| means.class_ids.binary_search(c).is_ok());
    let predict = |classes: &[usize]| -> Result<Option<Vec<usize>>> {
        if covered(classes) {
            ncm_predict(eval, means, classes).map(Some)
        } else {
            Ok(None)
        }
    };
    let all = predict(partition.classes(crate::data::Group::All))?;
    let seen = predict(partition.fine_tuning())?;
    let absent = predict(partition.absent())?;
    if all.is_none() && seen.is_none() && absent.is_none() {
        return Err(Error::invalid_arg(
            "class means cover neither S, U nor Y; nothing to evaluate",
        ));
    }
    AccReport::from_predictions(
        eval.labels(),
        partition,
        all.as_deref(),
        seen.as_deref(),
        absent.as_deref(),
    )
}
