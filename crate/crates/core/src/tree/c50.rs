use std::collections::BTreeSet;

use super::{
    class_counts, validate_training, Algorithm, Arity, DecisionTree, SplitDescriptor, TreeNode, TreeParams,
    SCORE_EPS,
};
use crate::criteria::{info_gain, ClassCounts, Partition};
use crate::dataset::{CategoricalTable, Code};
use crate::error::Result;

/// Multiway information-gain tree. Each feature is tested at most once per
/// path and every allowed code gets a branch; codes absent from a node's rows
/// become leaves labelled with the node's majority.
///
/// When no feature has positive immediate gain on an impure node (as at the
/// root of XOR), the feature with the best positive two-level gain is used
/// instead; its split records that two-level gain as its score.
pub fn train_c50(data: &CategoricalTable, params: &TreeParams) -> Result<DecisionTree> {
    validate_training(data, params)?;
    let idx: Vec<usize> = (0..data.n_rows()).collect();
    let mut available = vec![true; data.n_features()];
    let grower = C50 { data, params };
    let root = grower.grow(&idx, &mut available, 0);
    Ok(DecisionTree::new(Algorithm::C50, params.clone(), data.schema(), root))
}

struct C50<'a> {
    data: &'a CategoricalTable,
    params: &'a TreeParams,
}

struct Candidate {
    feature: usize,
    parts: Vec<Vec<usize>>,
    gain: f64,
}

impl C50<'_> {
    fn codes(&self, feature: usize) -> Vec<Code> {
        self.data.schema()[feature].allowed_codes.iter().copied().collect()
    }

    fn partition(&self, idx: &[usize], feature: usize) -> Vec<Vec<usize>> {
        let codes = self.codes(feature);
        let mut parts = vec![Vec::new(); codes.len()];
        for &i in idx {
            let k = codes
                .binary_search(&self.data.row(i)[feature])
                .expect("table codes are within the schema");
            parts[k].push(i);
        }
        parts
    }

    /// Eligible candidates with their immediate gain, ascending by feature.
    fn candidates(&self, idx: &[usize], parent: &ClassCounts, available: &[bool]) -> Vec<Candidate> {
        let min = self.params.min_records_per_branch;
        let mut out = Vec::new();
        for (feature, _) in available.iter().enumerate().filter(|(_, &a)| a) {
            let parts = self.partition(idx, feature);
            let non_empty = parts.iter().filter(|p| !p.is_empty()).count();
            if non_empty < 2 || parts.iter().any(|p| !p.is_empty() && p.len() < min) {
                continue;
            }
            let partition = Partition(parts.iter().map(|p| class_counts(self.data, p)).collect());
            let gain = info_gain(parent, &partition).expect("non-empty consistent partition");
            out.push(Candidate { feature, parts, gain });
        }
        out
    }

    fn best_immediate(&self, idx: &[usize], available: &[bool]) -> f64 {
        let counts = class_counts(self.data, idx);
        if counts.is_pure() {
            return 0.0;
        }
        self.candidates(idx, &counts, available)
            .iter()
            .map(|c| c.gain)
            .fold(0.0, f64::max)
    }

    fn grow(&self, idx: &[usize], available: &mut [bool], depth: usize) -> TreeNode {
        let counts = class_counts(self.data, idx);
        let mut node = TreeNode::leaf(counts.clone());
        if counts.is_pure() || !self.params.depth_allows_split(depth) {
            return node;
        }
        let candidates = self.candidates(idx, &counts, available);
        let mut best: Option<&Candidate> = None;
        for c in &candidates {
            if best.is_none_or(|b| c.gain > b.gain + SCORE_EPS) {
                best = Some(c);
            }
        }
        let (chosen, score) = match best {
            Some(b) if b.gain > SCORE_EPS => (b, b.gain),
            _ => match self.lookahead(idx, &candidates, available, depth) {
                Some(found) => found,
                None => return node,
            },
        };

        let feature = chosen.feature;
        let codes = self.codes(feature);
        available[feature] = false;
        let children = chosen
            .parts
            .iter()
            .map(|p| {
                if p.is_empty() {
                    TreeNode::empty_leaf(&node)
                } else {
                    self.grow(p, available, depth + 1)
                }
            })
            .collect();
        available[feature] = true;
        node.split = Some(SplitDescriptor {
            feature,
            arity: Arity::Multiway,
            branches: codes.into_iter().map(|c| BTreeSet::from([c])).collect(),
            score,
            threshold: None,
        });
        node.children = children;
        node
    }

    /// Best positive gain reachable by splitting on a candidate and then on
    /// the best remaining feature in each child.
    fn lookahead<'c>(
        &self,
        idx: &[usize],
        candidates: &'c [Candidate],
        available: &mut [bool],
        depth: usize,
    ) -> Option<(&'c Candidate, f64)> {
        if !self.params.depth_allows_split(depth + 1) {
            return None;
        }
        let n = idx.len() as f64;
        let mut best: Option<(&Candidate, f64)> = None;
        for c in candidates {
            available[c.feature] = false;
            let second: f64 = c
                .parts
                .iter()
                .filter(|p| !p.is_empty())
                .map(|p| p.len() as f64 / n * self.best_immediate(p, available))
                .sum();
            available[c.feature] = true;
            let total = c.gain + second;
            if best.is_none_or(|(_, g)| total > g + SCORE_EPS) {
                best = Some((c, total));
            }
        }
        best.filter(|&(_, g)| g > SCORE_EPS)
    }
}
