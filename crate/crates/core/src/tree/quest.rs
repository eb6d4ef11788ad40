use std::collections::BTreeSet;

use super::{
    class_counts, code_counts, validate_training, Algorithm, Arity, DecisionTree, SplitDescriptor, TreeNode,
    TreeParams, SCORE_EPS,
};
use crate::criteria::{chi_square, gini_decrease, ChiSquareVariant, ClassCounts};
use crate::dataset::{CategoricalTable, Code};
use crate::error::Result;

/// QUEST with class-1-rate scoring of categories.
///
/// The split variable is the feature with the smallest Pearson chi-square
/// p-value against the target. Each of its codes is scored by its class-1 rate
/// and a two-class quadratic discriminant on those scores places the
/// boundary; codes scoring at or below it go left. A zero class variance or a
/// boundary that leaves one side empty falls back to the midpoint of the class
/// means. CART's stopping rules apply to the resulting binary split.
pub fn train_quest(data: &CategoricalTable, params: &TreeParams) -> Result<DecisionTree> {
    validate_training(data, params)?;
    let idx: Vec<usize> = (0..data.n_rows()).collect();
    let root = grow(data, &idx, params, 0);
    Ok(DecisionTree::new(Algorithm::Quest, params.clone(), data.schema(), root))
}

fn select_feature(data: &CategoricalTable, idx: &[usize]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for f in 0..data.n_features() {
        let table: Vec<Vec<u64>> = code_counts(data, idx, f)
            .iter()
            .map(|(_, cc)| cc.as_slice().to_vec())
            .collect();
        let Ok(r) = chi_square(&table, ChiSquareVariant::Pearson) else {
            continue;
        };
        if best.is_none_or(|(_, p)| r.p_value < p) {
            best = Some((f, r.p_value));
        }
    }
    best
}

/// Boundary between the two classes' normal fits on the score scale, or
/// `None` when the scores do not separate the classes at all.
pub(crate) fn qda_threshold(scores: &[(f64, u8)]) -> Option<f64> {
    let stats = |class: u8| {
        let xs: Vec<f64> = scores.iter().filter(|s| s.1 == class).map(|s| s.0).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        (n, mean, var)
    };
    let (n0, m0, v0) = stats(0);
    let (n1, m1, v1) = stats(1);
    if n0 == 0.0 || n1 == 0.0 || (m0 - m1).abs() <= SCORE_EPS {
        return None;
    }
    let midpoint = 0.5 * (m0 + m1);
    if v0 <= SCORE_EPS || v1 <= SCORE_EPS {
        return Some(midpoint);
    }
    // log(pi1 N(x; m1, v1)) - log(pi0 N(x; m0, v0)) = a x^2 + b x + c
    let a = 0.5 / v0 - 0.5 / v1;
    let b = m1 / v1 - m0 / v0;
    let c = m0 * m0 / (2.0 * v0) - m1 * m1 / (2.0 * v1) + (n1 / n0).ln() - 0.5 * (v1 / v0).ln();
    let roots: Vec<f64> = if a.abs() < 1e-12 {
        if b.abs() < 1e-300 {
            vec![]
        } else {
            vec![-c / b]
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            vec![]
        } else {
            let s = disc.sqrt();
            vec![(-b - s) / (2.0 * a), (-b + s) / (2.0 * a)]
        }
    };
    let (lo, hi) = (m0.min(m1), m0.max(m1));
    let between = roots.iter().copied().filter(|r| (lo..=hi).contains(r)).fold(None, |acc: Option<f64>, r| {
        Some(acc.map_or(r, |a| if (r - midpoint).abs() < (a - midpoint).abs() { r } else { a }))
    });
    Some(between.unwrap_or(midpoint))
}

fn grow(data: &CategoricalTable, idx: &[usize], params: &TreeParams, depth: usize) -> TreeNode {
    let counts = class_counts(data, idx);
    let mut node = TreeNode::leaf(counts.clone());
    let min = params.min_records_per_branch as u64;
    if counts.is_pure() || !params.depth_allows_split(depth) || (idx.len() as u64) < 2 * min {
        return node;
    }
    let Some((feature, p)) = select_feature(data, idx) else {
        return node;
    };
    let per_code = code_counts(data, idx, feature);
    let rates: Vec<(Code, f64, &ClassCounts)> = per_code
        .iter()
        .map(|(code, cc)| (*code, cc.get(1) as f64 / cc.total() as f64, cc))
        .collect();
    let first = rates[0].1;
    if rates.iter().all(|r| (r.1 - first).abs() <= SCORE_EPS) {
        return node;
    }
    let rate_of = |code: Code| rates.iter().find(|r| r.0 == code).expect("observed code").1;
    let scores: Vec<(f64, u8)> = idx
        .iter()
        .map(|&i| (rate_of(data.row(i)[feature]), data.target()[i]))
        .collect();
    let Some(threshold) = qda_threshold(&scores) else {
        return node;
    };
    let sides = |t: f64| -> (Vec<Code>, Vec<Code>) {
        let (l, r): (Vec<&(Code, f64, &ClassCounts)>, Vec<_>) = rates.iter().partition(|x| x.1 <= t);
        (l.iter().map(|x| x.0).collect(), r.iter().map(|x| x.0).collect())
    };
    let (mut left_codes, mut right_codes) = sides(threshold);
    let mut threshold = threshold;
    if left_codes.is_empty() || right_codes.is_empty() {
        let (m0, m1) = class_means(&scores);
        threshold = 0.5 * (m0 + m1);
        (left_codes, right_codes) = sides(threshold);
        if left_codes.is_empty() || right_codes.is_empty() {
            return node;
        }
    }
    let mut left = ClassCounts::zeros(2);
    for r in rates.iter().filter(|r| left_codes.contains(&r.0)) {
        left.add(r.2);
    }
    let right = ClassCounts::binary(counts.get(0) - left.get(0), counts.get(1) - left.get(1));
    if left.total() < min || right.total() < min {
        return node;
    }
    let delta = gini_decrease(&counts, &left, &right, &params.cost).expect("consistent split");
    if delta <= SCORE_EPS {
        return node;
    }
    let left_set: BTreeSet<Code> = left_codes.into_iter().collect();
    let (l_idx, r_idx): (Vec<usize>, Vec<usize>) =
        idx.iter().partition(|&&i| left_set.contains(&data.row(i)[feature]));
    node.children = vec![grow(data, &l_idx, params, depth + 1), grow(data, &r_idx, params, depth + 1)];
    node.split = Some(SplitDescriptor {
        feature,
        arity: Arity::Binary,
        branches: vec![left_set, right_codes.into_iter().collect()],
        score: p,
        threshold: Some(threshold),
    });
    node
}

fn class_means(scores: &[(f64, u8)]) -> (f64, f64) {
    let mean = |class: u8| {
        let xs: Vec<f64> = scores.iter().filter(|s| s.1 == class).map(|s| s.0).collect();
        xs.iter().sum::<f64>() / xs.len() as f64
    };
    (mean(0), mean(1))
}
