//! Split-quality kernels: entropy, information gain, cost-weighted Gini,
//! impurity decrease and chi-square tests of independence.
//!
//! Every function here is pure and allocation-light so the tree builders can
//! call them in their inner loops.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};

/// Per-class record counts at a node (or in a child of a candidate split).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassCounts(Vec<u64>);

impl ClassCounts {
    pub fn new(counts: Vec<u64>) -> Self {
        ClassCounts(counts)
    }

    pub fn zeros(classes: usize) -> Self {
        ClassCounts(vec![0; classes])
    }

    pub fn binary(negative: u64, positive: u64) -> Self {
        ClassCounts(vec![negative, positive])
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    pub fn classes(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, class: usize) -> u64 {
        self.0.get(class).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn increment(&mut self, class: usize) {
        if class >= self.0.len() {
            self.0.resize(class + 1, 0);
        }
        self.0[class] += 1;
    }

    pub fn add(&mut self, other: &ClassCounts) {
        if other.0.len() > self.0.len() {
            self.0.resize(other.0.len(), 0);
        }
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    /// Class proportions; all zeros when the counts are empty.
    pub fn proportions(&self) -> Vec<f64> {
        let total = self.total();
        if total == 0 {
            return vec![0.0; self.0.len()];
        }
        self.0.iter().map(|&c| c as f64 / total as f64).collect()
    }

    /// Majority class, ties resolved towards the lower class code.
    pub fn majority(&self) -> usize {
        let mut best = 0;
        for (class, &count) in self.0.iter().enumerate() {
            if count > self.0[best] {
                best = class;
            }
        }
        best
    }

    /// Number of records not in the majority class.
    pub fn errors(&self) -> u64 {
        self.total() - self.get(self.majority())
    }

    pub fn is_pure(&self) -> bool {
        self.0.iter().filter(|&&c| c > 0).count() <= 1
    }
}

impl From<[u64; 2]> for ClassCounts {
    fn from(c: [u64; 2]) -> Self {
        ClassCounts(c.to_vec())
    }
}

/// Children of a candidate split, one class-count vector per branch.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Partition(pub Vec<ClassCounts>);

impl Partition {
    pub fn total(&self) -> u64 {
        self.0.iter().map(ClassCounts::total).sum()
    }
}

/// Misclassification cost `C(i|j)`: the cost of predicting class `i` for a
/// record whose true class is `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostMatrix {
    costs: Vec<Vec<f64>>,
}

impl CostMatrix {
    pub fn unit(classes: usize) -> Self {
        let costs = (0..classes)
            .map(|i| (0..classes).map(|j| if i == j { 0.0 } else { 1.0 }).collect())
            .collect();
        CostMatrix { costs }
    }

    /// `costs[i][j]` is `C(i|j)`.
    pub fn new(costs: Vec<Vec<f64>>) -> Result<Self> {
        let m = costs.len();
        for (i, row) in costs.iter().enumerate() {
            if row.len() != m {
                return Err(Error::InvalidParams("cost matrix must be square".into()));
            }
            for (j, &c) in row.iter().enumerate() {
                if i == j && c != 0.0 {
                    return Err(Error::InvalidParams("cost matrix diagonal must be 0".into()));
                }
                if !(c >= 0.0 && c.is_finite()) {
                    return Err(Error::InvalidParams(
                        "cost matrix entries must be finite and non-negative".into(),
                    ));
                }
            }
        }
        Ok(CostMatrix { costs })
    }

    pub fn classes(&self) -> usize {
        self.costs.len()
    }

    pub fn cost(&self, predicted: usize, truth: usize) -> f64 {
        self.costs[predicted][truth]
    }

    pub fn is_unit(&self) -> bool {
        *self == CostMatrix::unit(self.classes())
    }
}

impl Default for CostMatrix {
    fn default() -> Self {
        CostMatrix::unit(2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChiSquareVariant {
    Pearson,
    LikelihoodRatio,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub variant: ChiSquareVariant,
}

fn x_log2_x(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

/// Shannon entropy in bits, with `0 log 0 = 0`.
pub fn entropy(counts: &ClassCounts) -> Result<f64> {
    let total = counts.total();
    if total == 0 {
        return Err(Error::EmptyCounts);
    }
    Ok(entropy_unchecked(counts.as_slice(), total))
}

pub(crate) fn entropy_unchecked(counts: &[u64], total: u64) -> f64 {
    let n = total as f64;
    let h: f64 = counts.iter().map(|&c| -x_log2_x(c as f64 / n)).sum();
    h.max(0.0)
}

/// Parent entropy minus the size-weighted entropy of the children. Empty
/// children carry zero weight.
pub fn info_gain(parent: &ClassCounts, split: &Partition) -> Result<f64> {
    let total = parent.total();
    if total == 0 {
        return Err(Error::EmptyCounts);
    }
    let children = split.total();
    if children != total {
        return Err(Error::InconsistentTotals {
            parent: total,
            children,
        });
    }
    let n = total as f64;
    let weighted: f64 = split
        .0
        .iter()
        .filter(|c| c.total() > 0)
        .map(|c| c.total() as f64 / n * entropy_unchecked(c.as_slice(), c.total()))
        .sum();
    Ok(entropy_unchecked(parent.as_slice(), total) - weighted)
}

/// Cost-weighted Gini index `sum_{i,j} C(i|j) p_i p_j`.
pub fn gini(counts: &ClassCounts, cost: &CostMatrix) -> Result<f64> {
    let total = counts.total();
    if total == 0 {
        return Err(Error::EmptyCounts);
    }
    if counts.classes() > cost.classes() {
        return Err(Error::InvalidParams(format!(
            "cost matrix covers {} classes, counts have {}",
            cost.classes(),
            counts.classes()
        )));
    }
    Ok(gini_unchecked(counts.as_slice(), total, cost))
}

pub(crate) fn gini_unchecked(counts: &[u64], total: u64, cost: &CostMatrix) -> f64 {
    let n = total as f64;
    let mut g = 0.0;
    for (i, &ci) in counts.iter().enumerate() {
        if ci == 0 {
            continue;
        }
        let pi = ci as f64 / n;
        for (j, &cj) in counts.iter().enumerate() {
            if i != j && cj > 0 {
                g += cost.cost(i, j) * pi * (cj as f64 / n);
            }
        }
    }
    g
}

/// Impurity decrease of a binary split. An empty child contributes nothing.
pub fn gini_decrease(
    parent: &ClassCounts,
    left: &ClassCounts,
    right: &ClassCounts,
    cost: &CostMatrix,
) -> Result<f64> {
    let total = parent.total();
    if total == 0 {
        return Err(Error::EmptyCounts);
    }
    let children = left.total() + right.total();
    if children != total {
        return Err(Error::InconsistentTotals {
            parent: total,
            children,
        });
    }
    let n = total as f64;
    let mut delta = gini(parent, cost)?;
    for child in [left, right] {
        let t = child.total();
        if t > 0 {
            delta -= t as f64 / n * gini_unchecked(child.as_slice(), t, cost);
        }
    }
    Ok(delta)
}

/// Upper-tail probability of the chi-square distribution.
pub fn chi_square_sf(statistic: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    if statistic <= 0.0 {
        return 1.0;
    }
    if !statistic.is_finite() {
        return 0.0;
    }
    gamma_ur(dof as f64 / 2.0, statistic / 2.0).clamp(0.0, 1.0)
}

/// Chi-square test of independence on an `r x c` contingency table.
///
/// Rows and columns with a zero marginal are dropped before the test; at
/// least two of each must remain.
pub fn chi_square(table: &[Vec<u64>], variant: ChiSquareVariant) -> Result<ChiSquareResult> {
    let cols = table.first().map_or(0, Vec::len);
    if table.iter().any(|r| r.len() != cols) {
        return Err(Error::DegenerateTable("ragged rows".into()));
    }
    let row_sums: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<u64> = (0..cols).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let live_rows: Vec<usize> = (0..table.len()).filter(|&i| row_sums[i] > 0).collect();
    let live_cols: Vec<usize> = (0..cols).filter(|&j| col_sums[j] > 0).collect();
    if live_rows.len() < 2 || live_cols.len() < 2 {
        return Err(Error::DegenerateTable(format!(
            "{} non-empty rows and {} non-empty columns",
            live_rows.len(),
            live_cols.len()
        )));
    }
    let n: f64 = row_sums.iter().sum::<u64>() as f64;
    let mut statistic = 0.0;
    for &i in &live_rows {
        for &j in &live_cols {
            let observed = table[i][j] as f64;
            let expected = row_sums[i] as f64 * col_sums[j] as f64 / n;
            statistic += match variant {
                ChiSquareVariant::Pearson => (observed - expected).powi(2) / expected,
                ChiSquareVariant::LikelihoodRatio => {
                    if observed > 0.0 {
                        2.0 * observed * (observed / expected).ln()
                    } else {
                        0.0
                    }
                }
            };
        }
    }
    let statistic = statistic.max(0.0);
    let dof = (live_rows.len() - 1) * (live_cols.len() - 1);
    Ok(ChiSquareResult {
        statistic,
        dof,
        p_value: chi_square_sf(statistic, dof),
        variant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cc(v: &[u64]) -> ClassCounts {
        ClassCounts::new(v.to_vec())
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&cc(&[10, 0])).unwrap(), 0.0);
        assert!((entropy(&cc(&[5, 5])).unwrap() - 1.0).abs() < 1e-15);
        // -(346/740) log2(346/740) - (394/740) log2(394/740)
        let h = entropy(&cc(&[346, 394])).unwrap();
        assert!((h - 0.996_963_3).abs() < 1e-6, "{h}");
        assert!(matches!(entropy(&cc(&[0, 0])), Err(Error::EmptyCounts)));
    }

    #[test]
    fn info_gain_examples() {
        let parent = cc(&[6, 4]);
        assert!(info_gain(&parent, &Partition(vec![parent.clone()])).unwrap().abs() < 1e-15);
        let g = info_gain(&cc(&[5, 5]), &Partition(vec![cc(&[5, 0]), cc(&[0, 5])])).unwrap();
        assert!((g - 1.0).abs() < 1e-15);
        let g = info_gain(&parent, &Partition(vec![cc(&[4, 1]), cc(&[2, 3])])).unwrap();
        assert!((g - 0.124_511).abs() < 1e-6, "{g}");
        assert!(matches!(
            info_gain(&parent, &Partition(vec![cc(&[4, 1])])),
            Err(Error::InconsistentTotals { .. })
        ));
    }

    #[test]
    fn gini_examples() {
        let unit = CostMatrix::unit(2);
        assert_eq!(gini(&cc(&[10, 0]), &unit).unwrap(), 0.0);
        assert!((gini(&cc(&[5, 5]), &unit).unwrap() - 0.5).abs() < 1e-15);
        let cost = CostMatrix::new(vec![vec![0.0, 2.0], vec![1.0, 0.0]]).unwrap();
        assert!((gini(&cc(&[3, 7]), &cost).unwrap() - 0.63).abs() < 1e-12);
    }

    #[test]
    fn gini_decrease_examples() {
        let unit = CostMatrix::unit(2);
        let p = cc(&[6, 4]);
        assert_eq!(gini_decrease(&p, &p, &cc(&[0, 0]), &unit).unwrap(), 0.0);
        let d = gini_decrease(&cc(&[5, 5]), &cc(&[5, 0]), &cc(&[0, 5]), &unit).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
        let d = gini_decrease(&p, &cc(&[4, 1]), &cc(&[2, 3]), &unit).unwrap();
        assert!((d - 0.08).abs() < 1e-12, "{d}");
    }

    #[test]
    fn cost_matrix_validation() {
        assert!(CostMatrix::new(vec![vec![1.0, 1.0], vec![1.0, 0.0]]).is_err());
        assert!(CostMatrix::new(vec![vec![0.0, -1.0], vec![1.0, 0.0]]).is_err());
        assert!(CostMatrix::new(vec![vec![0.0, 1.0]]).is_err());
        assert!(CostMatrix::default().is_unit());
    }

    #[test]
    fn chi_square_examples() {
        let r = chi_square(&[vec![10, 10], vec![10, 10]], ChiSquareVariant::Pearson).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        let r = chi_square(&[vec![20, 0], vec![0, 20]], ChiSquareVariant::Pearson).unwrap();
        assert_eq!(r.statistic, 40.0);
        assert_eq!(r.dof, 1);
        // tabulated 5% critical value for one degree of freedom
        assert!((chi_square_sf(3.841, 1) - 0.05).abs() < 1e-4);
        assert!((chi_square_sf(3.841_458_820_694_124, 1) - 0.05).abs() < 1e-10);
        assert!(matches!(
            chi_square(&[vec![5, 0], vec![5, 0]], ChiSquareVariant::Pearson),
            Err(Error::DegenerateTable(_))
        ));
    }

    #[test]
    fn chi_square_drops_empty_margins() {
        let r = chi_square(&[vec![20, 0, 0], vec![0, 20, 0], vec![0, 0, 0]], ChiSquareVariant::Pearson)
            .unwrap();
        assert_eq!(r.dof, 1);
        assert_eq!(r.statistic, 40.0);
    }

    #[test]
    fn likelihood_ratio_perfect_association() {
        // G = 2 * 40 * ln 2
        let r = chi_square(&[vec![20, 0], vec![0, 20]], ChiSquareVariant::LikelihoodRatio).unwrap();
        assert!((r.statistic - 80.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn majority_ties_go_low() {
        assert_eq!(cc(&[5, 5]).majority(), 0);
        assert_eq!(cc(&[4, 5]).majority(), 1);
        assert_eq!(cc(&[4, 5]).errors(), 4);
    }

    proptest! {
        #[test]
        fn entropy_bounded_and_permutation_invariant(v in prop::collection::vec(0u64..50, 2..6)) {
            prop_assume!(v.iter().sum::<u64>() > 0);
            let h = entropy(&cc(&v)).unwrap();
            prop_assert!(h >= 0.0);
            prop_assert!(h <= (v.len() as f64).log2() + 1e-12);
            let mut r = v.clone();
            r.reverse();
            prop_assert!((entropy(&cc(&r)).unwrap() - h).abs() < 1e-12);
            let uniform = entropy(&cc(&vec![7; v.len()])).unwrap();
            prop_assert!(h <= uniform + 1e-12);
        }

        #[test]
        fn unit_gini_is_one_minus_sum_of_squares(v in prop::collection::vec(0u64..50, 2..5)) {
            prop_assume!(v.iter().sum::<u64>() > 0);
            let n: u64 = v.iter().sum();
            let direct = 1.0 - v.iter().map(|&c| (c as f64 / n as f64).powi(2)).sum::<f64>();
            let g = gini(&cc(&v), &CostMatrix::unit(v.len())).unwrap();
            prop_assert!((g - direct).abs() < 1e-12);
        }

        #[test]
        fn unit_gini_decrease_non_negative(l in prop::collection::vec(0u64..30, 2), r in prop::collection::vec(0u64..30, 2)) {
            let parent = cc(&[l[0] + r[0], l[1] + r[1]]);
            prop_assume!(parent.total() > 0);
            let d = gini_decrease(&parent, &cc(&l), &cc(&r), &CostMatrix::unit(2)).unwrap();
            prop_assert!(d >= -1e-12);
        }

        #[test]
        fn info_gain_bounded(children in prop::collection::vec(prop::collection::vec(0u64..20, 2), 1..5)) {
            let mut parent = ClassCounts::zeros(2);
            for c in &children { parent.add(&cc(c)); }
            prop_assume!(parent.total() > 0);
            let g = info_gain(&parent, &Partition(children.iter().map(|c| cc(c)).collect())).unwrap();
            prop_assert!(g >= -1e-12);
            prop_assert!(g <= entropy(&parent).unwrap() + 1e-12);
        }
    }
}
