//! Label-space partition, the labeled matrix containers and split generation.
//!
//! Class indices are 0-based throughout.

use std::fmt;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Which part of the label space a sample group or a prediction is restricted to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Group {
    /// Fine-tuning (seen) classes `S`.
    Seen,
    /// Absent classes `U`.
    Absent,
    /// The whole label space `Y`.
    All,
}

impl Group {
    pub fn symbol(self) -> &'static str {
        match self {
            Group::Seen => "S",
            Group::Absent => "U",
            Group::All => "Y",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl std::str::FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "S" | "s" | "seen" => Ok(Group::Seen),
            "U" | "u" | "absent" => Ok(Group::Absent),
            "Y" | "y" | "all" => Ok(Group::All),
            other => Err(Error::invalid_arg(format!("unknown group `{other}` (expected S, U or Y)"))),
        }
    }
}

/// The label space `{0..C-1}` split into fine-tuning classes `S` and absent
/// classes `U`, with `0 < |S| < C`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelPartition {
    num_classes: usize,
    fine_tuning: Vec<usize>,
    absent: Vec<usize>,
    all: Vec<usize>,
    seen_mask: Vec<bool>,
}

impl LabelPartition {
    /// Builds a partition from the fine-tuning class set. The input may be in
    /// any order but must not contain duplicates.
    pub fn new(num_classes: usize, fine_tuning: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut seen_mask = vec![false; num_classes];
        let mut count = 0;
        for c in fine_tuning {
            if c >= num_classes {
                return Err(Error::invalid_arg(format!(
                    "class {c} out of range for {num_classes} classes"
                )));
            }
            if seen_mask[c] {
                return Err(Error::invalid_arg(format!("class {c} listed twice")));
            }
            seen_mask[c] = true;
            count += 1;
        }
        if count == 0 || count >= num_classes {
            return Err(Error::invalid_arg(format!(
                "fine-tuning set must be a nonempty strict subset of {num_classes} classes, got {count}"
            )));
        }
        let fine_tuning = (0..num_classes).filter(|&c| seen_mask[c]).collect();
        let absent = (0..num_classes).filter(|&c| !seen_mask[c]).collect();
        Ok(LabelPartition {
            num_classes,
            fine_tuning,
            absent,
            all: (0..num_classes).collect(),
            seen_mask,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Sorted fine-tuning classes `S`.
    pub fn fine_tuning(&self) -> &[usize] {
        &self.fine_tuning
    }

    /// Sorted absent classes `U`, the complement of `S`.
    pub fn absent(&self) -> &[usize] {
        &self.absent
    }

    pub fn classes(&self, group: Group) -> &[usize] {
        match group {
            Group::Seen => &self.fine_tuning,
            Group::Absent => &self.absent,
            Group::All => &self.all,
        }
    }

    pub fn is_seen(&self, class: usize) -> bool {
        self.seen_mask[class]
    }

    /// Group a class belongs to (`Seen` or `Absent`).
    pub fn group_of(&self, class: usize) -> Group {
        if self.seen_mask[class] {
            Group::Seen
        } else {
            Group::Absent
        }
    }

    /// True if `class` is a member of `group`.
    pub fn contains(&self, group: Group, class: usize) -> bool {
        match group {
            Group::All => class < self.num_classes,
            Group::Seen => class < self.num_classes && self.seen_mask[class],
            Group::Absent => class < self.num_classes && !self.seen_mask[class],
        }
    }
}

fn check_finite(values: ArrayView2<'_, f64>, what: &str) -> Result<()> {
    if let Some(((r, c), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::invalid_input(format!(
            "{what} has non-finite entry {v} at row {r}, column {c}"
        )));
    }
    Ok(())
}

/// An `N x C` matrix of logits together with `N` ground-truth labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledLogits {
    values: Array2<f64>,
    labels: Vec<usize>,
}

impl LabeledLogits {
    pub fn new(values: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        let (n, c) = values.dim();
        if n == 0 {
            return Err(Error::invalid_input("logits must have at least one row"));
        }
        if c == 0 {
            return Err(Error::invalid_input("logits must have at least one column"));
        }
        if labels.len() != n {
            return Err(Error::Shape(format!(
                "{n} logit rows but {} labels",
                labels.len()
            )));
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= c) {
            return Err(Error::invalid_input(format!(
                "label {y} of sample {i} out of range for {c} classes"
            )));
        }
        check_finite(values.view(), "logit matrix")?;
        Ok(LabeledLogits { values, labels })
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.values.ncols()
    }

    /// Fails unless the logit width matches the partition's class count.
    pub fn check_partition(&self, partition: &LabelPartition) -> Result<()> {
        if self.num_classes() != partition.num_classes() {
            return Err(Error::Shape(format!(
                "logits have {} columns but the partition has {} classes",
                self.num_classes(),
                partition.num_classes()
            )));
        }
        Ok(())
    }

    pub fn into_parts(self) -> (Array2<f64>, Vec<usize>) {
        (self.values, self.labels)
    }
}

/// An `N x d` feature matrix together with `N` labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledFeatures {
    values: Array2<f64>,
    labels: Vec<usize>,
}

impl LabeledFeatures {
    pub fn new(values: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if values.nrows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} labels",
                values.nrows(),
                labels.len()
            )));
        }
        check_finite(values.view(), "feature matrix")?;
        Ok(LabeledFeatures { values, labels })
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> LabeledFeatures {
        let values = self.values.select(ndarray::Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        LabeledFeatures { values, labels }
    }

    /// Rows whose label satisfies `keep`, order preserved.
    pub fn filter_labels(&self, keep: impl Fn(usize) -> bool) -> LabeledFeatures {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(self.labels[i])).collect();
        self.select(&idx)
    }

    pub fn into_parts(self) -> (Array2<f64>, Vec<usize>) {
        (self.values, self.labels)
    }
}

/// A bias-free linear classifier; row `c` is the weight vector of class `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearHead {
    weights: Array2<f64>,
}

impl LinearHead {
    pub fn new(weights: Array2<f64>) -> Result<Self> {
        let (c, d) = weights.dim();
        if c < 2 || d == 0 {
            return Err(Error::Shape(format!(
                "linear head needs at least 2 classes and 1 input dimension, got {c}x{d}"
            )));
        }
        check_finite(weights.view(), "linear head")?;
        Ok(LinearHead { weights })
    }

    pub fn weights(&self) -> ArrayView2<'_, f64> {
        self.weights.view()
    }

    pub(crate) fn weights_mut(&mut self) -> &mut Array2<f64> {
        &mut self.weights
    }

    pub fn num_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.weights
    }
}

/// Uniformly random `k`-subset of `num_classes` classes as the fine-tuning set.
pub fn make_random_split(num_classes: usize, k: usize, seed: u64) -> Result<LabelPartition> {
    if k == 0 || k >= num_classes {
        return Err(Error::invalid_arg(format!(
            "split size k={k} must satisfy 1 <= k < {num_classes}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let chosen = index::sample(&mut rng, num_classes, k).into_vec();
    LabelPartition::new(num_classes, chosen)
}

fn euclidean(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Greedy split that keeps the fine-tuning classes tightly clustered.
///
/// Starts from the closest pair of class means and repeatedly adds the class
/// that minimizes the total pairwise distance within the group. All ties go to
/// the smallest class index (lexicographically smallest pair for the seed).
/// For `k = 1` the result is the lower-indexed class of the closest pair.
pub fn make_greedy_similar_split(class_means: ArrayView2<'_, f64>, k: usize) -> Result<LabelPartition> {
    let c = class_means.nrows();
    if k == 0 || k >= c {
        return Err(Error::invalid_arg(format!("split size k={k} must satisfy 1 <= k < {c}")));
    }
    check_finite(class_means, "class means")?;

    let mut dist = Array2::<f64>::zeros((c, c));
    for i in 0..c {
        for j in (i + 1)..c {
            let d = euclidean(class_means.row(i), class_means.row(j));
            dist[[i, j]] = d;
            dist[[j, i]] = d;
        }
    }

    let mut best = (0, 1);
    for i in 0..c {
        for j in (i + 1)..c {
            if dist[[i, j]] < dist[[best.0, best.1]] {
                best = (i, j);
            }
        }
    }
    if k == 1 {
        return LabelPartition::new(c, [best.0]);
    }

    let mut chosen = vec![best.0, best.1];
    let mut in_group = vec![false; c];
    in_group[best.0] = true;
    in_group[best.1] = true;
    while chosen.len() < k {
        // The existing intra-group total is shared by all candidates, so the
        // candidate's summed distance to current members decides.
        let mut pick: Option<(usize, f64)> = None;
        for cand in (0..c).filter(|&j| !in_group[j]) {
            let cost: f64 = chosen.iter().map(|&m| dist[[cand, m]]).sum();
            if pick.is_none_or(|(_, best_cost)| cost < best_cost) {
                pick = Some((cand, cost));
            }
        }
        let (cand, _) = pick.expect("k < C leaves at least one candidate");
        in_group[cand] = true;
        chosen.push(cand);
    }
    LabelPartition::new(c, chosen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::collections::HashMap;

    #[test]
    fn partition_complement() {
        let p = LabelPartition::new(5, [3, 0]).unwrap();
        assert_eq!(p.fine_tuning(), &[0, 3]);
        assert_eq!(p.absent(), &[1, 2, 4]);
        assert!(p.contains(Group::Seen, 3));
        assert!(p.contains(Group::Absent, 4));
        assert!(!p.contains(Group::All, 5));
    }

    #[test]
    fn partition_rejects_bad_sets() {
        assert!(LabelPartition::new(3, []).is_err());
        assert!(LabelPartition::new(3, [0, 1, 2]).is_err());
        assert!(LabelPartition::new(3, [0, 0]).is_err());
        assert!(LabelPartition::new(3, [3]).is_err());
    }

    #[test]
    fn logits_validation() {
        assert!(LabeledLogits::new(array![[1.0, 2.0]], vec![2]).is_err());
        assert!(LabeledLogits::new(array![[1.0, f64::NAN]], vec![0]).is_err());
        assert!(LabeledLogits::new(Array2::zeros((0, 3)), vec![]).is_err());
        assert!(LabeledLogits::new(array![[1.0, 2.0]], vec![0, 1]).is_err());
        assert!(LabeledLogits::new(array![[1.0, 2.0]], vec![1]).is_ok());
    }

    #[test]
    fn head_shape() {
        assert!(LinearHead::new(array![[1.0, 2.0]]).is_err());
        assert!(LinearHead::new(array![[1.0], [2.0]]).is_ok());
    }

    #[test]
    fn random_split_rejects_full_set() {
        assert!(make_random_split(4, 4, 1).is_err());
        assert!(make_random_split(4, 0, 1).is_err());
    }

    #[test]
    fn random_split_two_classes() {
        for seed in 0..20 {
            let p = make_random_split(2, 1, seed).unwrap();
            assert!(p.fine_tuning() == [0] || p.fine_tuning() == [1]);
            assert_eq!(p, make_random_split(2, 1, seed).unwrap());
        }
    }

    #[test]
    fn random_split_deterministic() {
        let a = make_random_split(10, 5, 7).unwrap();
        let b = make_random_split(10, 5, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fine_tuning().len(), 5);
    }

    #[test]
    fn random_split_is_uniform() {
        let trials = 10_000u64;
        let mut freq: HashMap<Vec<usize>, u64> = HashMap::new();
        for seed in 0..trials {
            let p = make_random_split(6, 3, seed).unwrap();
            let s = p.fine_tuning().to_vec();
            let u = p.absent().to_vec();
            assert_eq!(s.len() + u.len(), 6);
            assert!(s.iter().all(|c| !u.contains(c)));
            *freq.entry(s).or_default() += 1;
        }
        assert_eq!(freq.len(), 20);
        let p = 1.0 / 20.0;
        let expected = trials as f64 * p;
        let se = (trials as f64 * p * (1.0 - p)).sqrt();
        for (subset, &count) in &freq {
            let dev = (count as f64 - expected).abs();
            assert!(dev <= 5.0 * se, "{subset:?}: {count} vs {expected}");
        }
    }

    fn total_intra(means: ArrayView2<'_, f64>, subset: &[usize]) -> f64 {
        let mut t = 0.0;
        for (a, &i) in subset.iter().enumerate() {
            for &j in &subset[a + 1..] {
                t += euclidean(means.row(i), means.row(j));
            }
        }
        t
    }

    /// All k-subsets of 0..n in lexicographic order.
    fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
        fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for i in start..n {
                cur.push(i);
                rec(i + 1, n, k, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        rec(0, n, k, &mut Vec::new(), &mut out);
        out
    }

    fn exhaustive_best(means: ArrayView2<'_, f64>, k: usize) -> (Vec<usize>, f64) {
        let mut best: Option<(Vec<usize>, f64)> = None;
        for s in subsets(means.nrows(), k) {
            let t = total_intra(means, &s);
            if best.as_ref().is_none_or(|(_, b)| t < *b) {
                best = Some((s, t));
            }
        }
        best.unwrap()
    }

    #[test]
    fn greedy_matches_exhaustive_on_line() {
        let means = array![[0.0], [1.0], [10.0], [11.0]];
        let p = make_greedy_similar_split(means.view(), 2).unwrap();
        let (oracle, _) = exhaustive_best(means.view(), 2);
        assert_eq!(oracle, vec![0, 1]);
        assert_eq!(p.fine_tuning(), oracle.as_slice());
    }

    #[test]
    fn greedy_ties_go_to_lowest_index() {
        let means = Array2::<f64>::ones((5, 3));
        let p = make_greedy_similar_split(means.view(), 4).unwrap();
        assert_eq!(p.fine_tuning(), &[0, 1, 2, 3]);
    }

    #[test]
    fn greedy_five_points_against_oracle() {
        // Exhaustive search over all 3-subsets finds {2,3,4} (total ~11.657).
        // Greedy growth seeded at the closest pair {0,1} (ties with {2,3},
        // lowest index wins) adds class 2 and ends at {0,1,2} (total ~14.47).
        let means = array![[0.0, 0.0], [0.0, 1.0], [5.0, 5.0], [5.0, 6.0], [9.0, 9.0]];
        let (oracle, oracle_total) = exhaustive_best(means.view(), 3);
        assert_eq!(oracle, vec![2, 3, 4]);
        assert!((oracle_total - (1.0 + 32f64.sqrt() + 5.0)).abs() < 1e-12);

        let p = make_greedy_similar_split(means.view(), 3).unwrap();
        assert_eq!(p.fine_tuning(), &[0, 1, 2]);
        let greedy_total = total_intra(means.view(), p.fine_tuning());
        assert!((greedy_total - (1.0 + 50f64.sqrt() + 41f64.sqrt())).abs() < 1e-12);
        assert!(greedy_total >= oracle_total);
    }

    #[test]
    fn greedy_each_step_is_locally_optimal() {
        // Step-wise oracle: every prefix of the greedy order must be the best
        // single-class extension of the previous prefix.
        let means = array![[0.3, 1.0], [2.0, 2.0], [0.0, 0.9], [5.0, 1.0], [2.2, 1.7], [9.0, 0.0]];
        for k in 2..6 {
            let p = make_greedy_similar_split(means.view(), k).unwrap();
            let q = make_greedy_similar_split(means.view(), k).unwrap();
            assert_eq!(p, q);
            assert_eq!(p.fine_tuning().len(), k);
            if k > 2 {
                let prev = make_greedy_similar_split(means.view(), k - 1).unwrap();
                let added: Vec<usize> = p
                    .fine_tuning()
                    .iter()
                    .copied()
                    .filter(|c| !prev.fine_tuning().contains(c))
                    .collect();
                assert_eq!(added.len(), 1);
                let base = prev.fine_tuning().to_vec();
                let best = (0..6)
                    .filter(|c| !base.contains(c))
                    .map(|c| {
                        let mut s = base.clone();
                        s.push(c);
                        (c, total_intra(means.view(), &s))
                    })
                    .fold(None::<(usize, f64)>, |acc, x| match acc {
                        Some(a) if a.1 <= x.1 => Some(a),
                        _ => Some(x),
                    })
                    .unwrap();
                assert_eq!(added[0], best.0);
            }
        }
    }

    #[test]
    fn greedy_k1() {
        let means = array![[0.0], [5.0], [5.5]];
        let p = make_greedy_similar_split(means.view(), 1).unwrap();
        assert_eq!(p.fine_tuning(), &[1]);
    }
}
