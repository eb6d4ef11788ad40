use std::collections::BTreeSet;

use super::{
    class_counts, code_counts, validate_training, Algorithm, Arity, DecisionTree, SplitDescriptor, TreeNode,
    TreeParams, SCORE_EPS,
};
use crate::criteria::{gini_decrease, ClassCounts};
use crate::dataset::{CategoricalTable, Code};
use crate::error::Result;

/// Chooses which features a node may split on.
pub(crate) trait FeatureSampler {
    fn candidates(&mut self, n_features: usize) -> Vec<usize>;

    /// Called after a node commits to a split.
    fn chosen(&mut self, _candidates: &[usize], _feature: usize) {}
}

struct AllFeatures;

impl FeatureSampler for AllFeatures {
    fn candidates(&mut self, n_features: usize) -> Vec<usize> {
        (0..n_features).collect()
    }
}

/// Binary Gini tree over code subsets.
///
/// For a feature with `k` codes observed at a node, the `2^(k-1) - 1`
/// distinct subset splits are enumerated with the smallest code always on the
/// left. The largest decrease wins; ties go to the lower feature index and
/// then the lexicographically smaller left subset.
pub fn train_cart(data: &CategoricalTable, params: &TreeParams) -> Result<DecisionTree> {
    validate_training(data, params)?;
    let idx: Vec<usize> = (0..data.n_rows()).collect();
    let root = grow_cart(data, &idx, params, &mut AllFeatures);
    Ok(DecisionTree::new(Algorithm::Cart, params.clone(), data.schema(), root))
}

/// Grow a CART subtree over `idx`, which may repeat rows.
pub(crate) fn grow_cart(
    data: &CategoricalTable,
    idx: &[usize],
    params: &TreeParams,
    sampler: &mut dyn FeatureSampler,
) -> TreeNode {
    grow(data, idx, params, sampler, 0)
}

fn grow(
    data: &CategoricalTable,
    idx: &[usize],
    params: &TreeParams,
    sampler: &mut dyn FeatureSampler,
    depth: usize,
) -> TreeNode {
    let counts = class_counts(data, idx);
    let mut node = TreeNode::leaf(counts.clone());
    let min = params.min_records_per_branch;
    if counts.is_pure() || !params.depth_allows_split(depth) || idx.len() < 2 * min {
        return node;
    }
    let candidates = sampler.candidates(data.n_features());
    let Some(best) = best_binary_split(data, idx, &counts, &candidates, params) else {
        return node;
    };
    sampler.chosen(&candidates, best.feature);

    let left_set: BTreeSet<Code> = best.left.iter().copied().collect();
    let (left, right): (Vec<usize>, Vec<usize>) =
        idx.iter().partition(|&&i| left_set.contains(&data.row(i)[best.feature]));
    let children = vec![
        grow(data, &left, params, sampler, depth + 1),
        grow(data, &right, params, sampler, depth + 1),
    ];
    node.split = Some(SplitDescriptor {
        feature: best.feature,
        arity: Arity::Binary,
        branches: vec![left_set, best.right.into_iter().collect()],
        score: best.delta,
        threshold: None,
    });
    node.children = children;
    node
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct BinarySplit {
    pub feature: usize,
    pub left: Vec<Code>,
    pub right: Vec<Code>,
    pub delta: f64,
}

/// Best eligible subset split among `features`, or `None` if no candidate
/// decreases impurity by more than the tie tolerance.
pub(crate) fn best_binary_split(
    data: &CategoricalTable,
    idx: &[usize],
    parent: &ClassCounts,
    features: &[usize],
    params: &TreeParams,
) -> Option<BinarySplit> {
    let min = params.min_records_per_branch as u64;
    let mut best: Option<BinarySplit> = None;
    let mut features = features.to_vec();
    features.sort_unstable();
    for &f in &features {
        let per_code = code_counts(data, idx, f);
        let k = per_code.len();
        if k < 2 {
            continue;
        }
        let rest = k - 1;
        for mask in 0..(1usize << rest) - 1 {
            let mut left = per_code[0].1.clone();
            let mut left_codes = vec![per_code[0].0];
            let mut right_codes = Vec::new();
            for (j, (code, c)) in per_code.iter().enumerate().skip(1) {
                if mask >> (j - 1) & 1 == 1 {
                    left.add(c);
                    left_codes.push(*code);
                } else {
                    right_codes.push(*code);
                }
            }
            let right = ClassCounts::binary(parent.get(0) - left.get(0), parent.get(1) - left.get(1));
            if left.total() < min || right.total() < min {
                continue;
            }
            let delta = gini_decrease(parent, &left, &right, &params.cost).expect("consistent binary split");
            let better = match &best {
                None => true,
                Some(b) => {
                    delta > b.delta + SCORE_EPS
                        || ((delta - b.delta).abs() <= SCORE_EPS && f == b.feature && left_codes < b.left)
                }
            };
            if better {
                best = Some(BinarySplit {
                    feature: f,
                    left: left_codes,
                    right: right_codes,
                    delta,
                });
            }
        }
    }
    best.filter(|b| b.delta > SCORE_EPS)
}
