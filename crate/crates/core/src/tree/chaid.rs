use std::collections::BTreeSet;

use super::{
    class_counts, code_counts, route, validate_training, Algorithm, Arity, DecisionTree, SplitDescriptor,
    TreeNode, TreeParams,
};
use crate::criteria::{chi_square, ChiSquareVariant, ClassCounts};
use crate::dataset::{CategoricalTable, Code};
use crate::error::Result;

/// Stirling number of the second kind `S(n, k)`: the number of ways to
/// partition `n` codes into `k` non-empty groups.
pub fn stirling2(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut row = vec![0.0_f64; k + 1];
    row[0] = 1.0;
    for i in 1..=n {
        for j in (1..=k.min(i)).rev() {
            row[j] = j as f64 * row[j] + row[j - 1];
        }
        row[0] = 0.0;
    }
    row[k]
}

/// CHAID: per feature, repeatedly merge the pair of code groups whose 2 x c
/// class table is least significant while that p-value is at least `alpha`
/// and more than two groups remain. The split goes to the feature whose merged
/// grouping has the smallest Bonferroni-adjusted p-value, provided it is below
/// `alpha`. Groups smaller than `min_records_per_branch` disqualify a feature.
pub fn train_chaid(data: &CategoricalTable, params: &TreeParams) -> Result<DecisionTree> {
    validate_training(data, params)?;
    let idx: Vec<usize> = (0..data.n_rows()).collect();
    let root = grow(data, &idx, params, 0);
    Ok(DecisionTree::new(Algorithm::Chaid, params.clone(), data.schema(), root))
}

fn pearson_p(table: &[Vec<u64>]) -> f64 {
    chi_square(table, ChiSquareVariant::Pearson).map_or(1.0, |r| r.p_value)
}

#[derive(Debug)]
pub(crate) struct Grouping {
    pub groups: Vec<(BTreeSet<Code>, ClassCounts)>,
    pub adjusted_p: f64,
}

pub(crate) fn merge_categories(per_code: &[(Code, ClassCounts)], alpha: f64) -> Option<Grouping> {
    let c = per_code.len();
    if c < 2 {
        return None;
    }
    let mut groups: Vec<(BTreeSet<Code>, ClassCounts)> =
        per_code.iter().map(|(code, cc)| (BTreeSet::from([*code]), cc.clone())).collect();
    while groups.len() > 2 {
        let mut worst: Option<(usize, usize, f64)> = None;
        for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                let p = pearson_p(&[groups[i].1.as_slice().to_vec(), groups[j].1.as_slice().to_vec()]);
                if worst.is_none_or(|(_, _, w)| p > w) {
                    worst = Some((i, j, p));
                }
            }
        }
        let (i, j, p) = worst.expect("at least one pair");
        if p < alpha {
            break;
        }
        let (codes, counts) = groups.remove(j);
        groups[i].0.extend(codes);
        groups[i].1.add(&counts);
    }
    let table: Vec<Vec<u64>> = groups.iter().map(|(_, cc)| cc.as_slice().to_vec()).collect();
    let raw = pearson_p(&table);
    let adjusted_p = (stirling2(c, groups.len()) * raw).min(1.0);
    Some(Grouping { groups, adjusted_p })
}

fn grow(data: &CategoricalTable, idx: &[usize], params: &TreeParams, depth: usize) -> TreeNode {
    let counts = class_counts(data, idx);
    let mut node = TreeNode::leaf(counts.clone());
    if counts.is_pure() || !params.depth_allows_split(depth) {
        return node;
    }
    let min = params.min_records_per_branch as u64;
    let mut best: Option<(usize, Grouping)> = None;
    for f in 0..data.n_features() {
        let Some(g) = merge_categories(&code_counts(data, idx, f), params.alpha) else {
            continue;
        };
        if g.groups.iter().any(|(_, cc)| cc.total() < min) {
            continue;
        }
        if best.as_ref().is_none_or(|(_, b)| g.adjusted_p < b.adjusted_p) {
            best = Some((f, g));
        }
    }
    let Some((feature, grouping)) = best.filter(|(_, g)| g.adjusted_p < params.alpha) else {
        return node;
    };
    let split = SplitDescriptor {
        feature,
        arity: Arity::Merged,
        branches: grouping.groups.into_iter().map(|(codes, _)| codes).collect(),
        score: grouping.adjusted_p,
        threshold: None,
    };
    let (parts, stopped) = route(data, idx, &split);
    debug_assert!(stopped.is_empty());
    node.children = parts.iter().map(|p| grow(data, p, params, depth + 1)).collect();
    node.split = Some(split);
    node
}
