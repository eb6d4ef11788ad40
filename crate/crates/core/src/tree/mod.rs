//! Classification trees over categorical codes.
//!
//! Four growers share one node representation: C5.0 (multiway, information
//! gain), CART (binary code subsets, Gini decrease), CHAID (merged code groups,
//! Bonferroni-adjusted chi-square) and QUEST (chi-square variable selection,
//! discriminant split point). Every split stores its branches as explicit code
//! sets, so a code that no branch claims stops descent at that node.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::criteria::{ClassCounts, CostMatrix};
use crate::dataset::{schema_hash, CategoricalTable, Code, FeatureSpec};
use crate::error::{Error, Result};

mod c50;
mod cart;
mod chaid;
mod dot;
mod importance;
mod prune;
mod quest;

pub use c50::train_c50;
pub use cart::train_cart;
pub(crate) use cart::{grow_cart, FeatureSampler};
pub use chaid::{stirling2, train_chaid};
pub use dot::export_dot;
pub use importance::{predictor_importance, Importance};
pub use prune::{pessimistic_errors, prune_c50, upper_error_bound};
pub use quest::train_quest;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    C50,
    Cart,
    Chaid,
    Quest,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::C50 => "C5.0",
            Algorithm::Cart => "C&R Tree",
            Algorithm::Chaid => "CHAID",
            Algorithm::Quest => "Quest",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    pub min_records_per_branch: usize,
    /// Percent in (0, 100); only used by pruning.
    pub pruning_severity: f64,
    pub max_depth: Option<usize>,
    /// CHAID significance level.
    pub alpha: f64,
    pub cost: CostMatrix,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            min_records_per_branch: 2,
            pruning_severity: 75.0,
            max_depth: None,
            alpha: 0.05,
            cost: CostMatrix::default(),
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_records_per_branch < 1 {
            return Err(Error::InvalidParams("min_records_per_branch must be at least 1".into()));
        }
        if !(self.pruning_severity > 0.0 && self.pruning_severity < 100.0) {
            return Err(Error::InvalidParams(format!(
                "pruning severity {} outside (0, 100)",
                self.pruning_severity
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParams(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if self.cost.classes() != 2 {
            return Err(Error::InvalidParams("cost matrix must be 2 x 2".into()));
        }
        Ok(())
    }

    fn depth_allows_split(&self, depth: usize) -> bool {
        self.max_depth.is_none_or(|d| depth < d)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arity {
    /// One branch per code.
    Multiway,
    /// A code subset against the remaining observed codes.
    Binary,
    /// A partition of codes into merged groups.
    Merged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitDescriptor {
    pub feature: usize,
    pub arity: Arity,
    /// `branches[k]` is the code set routed to child `k`.
    pub branches: Vec<BTreeSet<Code>>,
    /// Selection score: information gain, Gini decrease, adjusted p-value or
    /// chi-square p-value depending on the grower.
    pub score: f64,
    /// QUEST boundary on the class-1-rate scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

impl SplitDescriptor {
    pub fn branch_of(&self, code: Code) -> Option<usize> {
        self.branches.iter().position(|b| b.contains(&code))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub counts: ClassCounts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitDescriptor>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<TreeNode>,
    pub prediction: u8,
    pub confidence: f64,
    /// Estimated probability of class 1 at this node.
    pub positive_rate: f64,
}

impl TreeNode {
    pub fn leaf(counts: ClassCounts) -> Self {
        let total = counts.total();
        let prediction = counts.majority() as u8;
        let (confidence, positive_rate) = if total == 0 {
            (0.0, 0.0)
        } else {
            (
                counts.get(prediction as usize) as f64 / total as f64,
                counts.get(1) as f64 / total as f64,
            )
        };
        TreeNode {
            counts,
            split: None,
            children: Vec::new(),
            prediction,
            confidence,
            positive_rate,
        }
    }

    /// Leaf for a branch that received no training rows: it inherits the
    /// parent's label and class-1 rate.
    pub fn empty_leaf(parent: &TreeNode) -> Self {
        TreeNode {
            counts: ClassCounts::zeros(parent.counts.classes()),
            split: None,
            children: Vec::new(),
            prediction: parent.prediction,
            confidence: parent.confidence,
            positive_rate: parent.positive_rate,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }

    pub fn n_nodes(&self) -> usize {
        1 + self.children.iter().map(TreeNode::n_nodes).sum::<usize>()
    }

    pub fn n_leaves(&self) -> usize {
        if self.is_leaf() {
            1
        } else {
            self.children.iter().map(TreeNode::n_leaves).sum()
        }
    }

    pub fn depth(&self) -> usize {
        self.children.iter().map(|c| 1 + c.depth()).max().unwrap_or(0)
    }

    /// Nodes in preorder.
    pub fn preorder(&self) -> Vec<&TreeNode> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(n.children.iter().rev());
        }
        out
    }

    pub(crate) fn collapse(&mut self) {
        self.split = None;
        self.children.clear();
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub algorithm: Algorithm,
    pub params: TreeParams,
    pub schema: Vec<FeatureSpec>,
    pub schema_hash: String,
    pub root: TreeNode,
}

impl DecisionTree {
    pub(crate) fn new(algorithm: Algorithm, params: TreeParams, schema: &[FeatureSpec], root: TreeNode) -> Self {
        DecisionTree {
            algorithm,
            params,
            schema: schema.to_vec(),
            schema_hash: schema_hash(schema),
            root,
        }
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    /// The node where descent for `row` stops: a leaf, or an internal node
    /// none of whose branches claims the row's code.
    pub fn reach(&self, row: &[Code]) -> &TreeNode {
        let mut node = &self.root;
        while let Some(split) = &node.split {
            match split.branch_of(row[split.feature]) {
                Some(k) => node = &node.children[k],
                None => break,
            }
        }
        node
    }

    pub fn check_row(&self, row: &[Code]) -> Result<()> {
        if row.len() != self.schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "row has {} values, tree expects {}",
                row.len(),
                self.schema.len()
            )));
        }
        Ok(())
    }

    /// Predicted class and its confidence.
    pub fn predict(&self, row: &[Code]) -> Result<(u8, f64)> {
        self.check_row(row)?;
        let n = self.reach(row);
        Ok((n.prediction, n.confidence))
    }

    pub fn predict_proba(&self, row: &[Code]) -> Result<f64> {
        self.check_row(row)?;
        Ok(self.reach(row).positive_rate)
    }

    pub fn accuracy(&self, data: &CategoricalTable) -> Result<f64> {
        check_schema(&self.schema, data)?;
        let correct = data
            .rows()
            .iter()
            .zip(data.target())
            .filter(|(r, &y)| self.reach(r).prediction == y)
            .count();
        Ok(correct as f64 / data.n_rows() as f64)
    }

    pub fn n_nodes(&self) -> usize {
        self.root.n_nodes()
    }

    pub fn n_leaves(&self) -> usize {
        self.root.n_leaves()
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    /// Features tested anywhere in the tree, ascending.
    pub fn used_features(&self) -> BTreeSet<usize> {
        self.root
            .preorder()
            .into_iter()
            .filter_map(|n| n.split.as_ref().map(|s| s.feature))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let tree: DecisionTree = serde_json::from_str(text)?;
        if tree.schema_hash != schema_hash(&tree.schema) {
            return Err(Error::SchemaMismatch("stored schema hash does not match schema".into()));
        }
        Ok(tree)
    }
}

pub fn train_tree(algorithm: Algorithm, data: &CategoricalTable, params: &TreeParams) -> Result<DecisionTree> {
    match algorithm {
        Algorithm::C50 => train_c50(data, params),
        Algorithm::Cart => train_cart(data, params),
        Algorithm::Chaid => train_chaid(data, params),
        Algorithm::Quest => train_quest(data, params),
    }
}

pub fn check_schema(schema: &[FeatureSpec], data: &CategoricalTable) -> Result<()> {
    if schema_hash(schema) != data.schema_hash() {
        return Err(Error::SchemaMismatch(format!(
            "model schema {} differs from table schema {}",
            schema_hash(schema),
            data.schema_hash()
        )));
    }
    Ok(())
}

pub(crate) fn class_counts(data: &CategoricalTable, idx: &[usize]) -> ClassCounts {
    let mut c = ClassCounts::zeros(2);
    for &i in idx {
        c.increment(data.target()[i] as usize);
    }
    c
}

/// Codes of `feature` present among `idx`, ascending, with their class counts.
pub(crate) fn code_counts(data: &CategoricalTable, idx: &[usize], feature: usize) -> Vec<(Code, ClassCounts)> {
    let mut map: std::collections::BTreeMap<Code, ClassCounts> = std::collections::BTreeMap::new();
    for &i in idx {
        map.entry(data.row(i)[feature])
            .or_insert_with(|| ClassCounts::zeros(2))
            .increment(data.target()[i] as usize);
    }
    map.into_iter().collect()
}

/// Route `idx` into the branches of `split`; rows whose code no branch claims
/// are returned separately.
pub(crate) fn route(
    data: &CategoricalTable,
    idx: &[usize],
    split: &SplitDescriptor,
) -> (Vec<Vec<usize>>, Vec<usize>) {
    let mut parts = vec![Vec::new(); split.branches.len()];
    let mut stopped = Vec::new();
    for &i in idx {
        match split.branch_of(data.row(i)[split.feature]) {
            Some(k) => parts[k].push(i),
            None => stopped.push(i),
        }
    }
    (parts, stopped)
}

pub(crate) fn validate_training(data: &CategoricalTable, params: &TreeParams) -> Result<()> {
    params.validate()?;
    if data.n_rows() == 0 {
        return Err(Error::InvalidTable("training table is empty".into()));
    }
    if data.n_features() == 0 {
        return Err(Error::InvalidTable("training table has no features".into()));
    }
    Ok(())
}

/// Tolerance under which two split scores are considered tied.
pub(crate) const SCORE_EPS: f64 = 1e-12;


#[cfg(test)]
mod tests {
    use super::test_util::*;
    use super::*;
    use crate::dataset::{generate_synthetic, GenerativeRules, TargetModel, Term};
    use proptest::prelude::*;

    #[test]
    fn params_validation() {
        assert!(TreeParams::default().validate().is_ok());
        for bad in [
            TreeParams { min_records_per_branch: 0, ..TreeParams::default() },
            TreeParams { pruning_severity: 100.0, ..TreeParams::default() },
            TreeParams { alpha: 0.0, ..TreeParams::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn json_round_trip() {
        let t = train_c50(&copy_table(), &TreeParams::default()).unwrap();
        let back = DecisionTree::from_json(&t.to_json().unwrap()).unwrap();
        assert_eq!(t, back);
        let mut v: serde_json::Value = serde_json::from_str(&t.to_json().unwrap()).unwrap();
        v["schema_hash"] = "00".into();
        assert!(DecisionTree::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn row_length_is_checked() {
        let t = train_cart(&copy_table(), &TreeParams::default()).unwrap();
        assert!(matches!(t.predict(&[0]), Err(Error::SchemaMismatch(_))));
    }

    fn random_table(seed: u64) -> CategoricalTable {
        let schema: Vec<FeatureSpec> = (0..4).map(|i| FeatureSpec::new(format!("v{i}"), 0..3)).collect();
        let target = TargetModel::Logistic {
            intercept: -0.5,
            terms: vec![Term::new(&[(0, 2)], 1.5), Term::new(&[(1, 0), (2, 1)], 1.2)],
        };
        generate_synthetic(&schema, 120, seed, &GenerativeRules::uniform(4, target)).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn prediction_is_total(seed in 0u64..1000, row in prop::collection::vec(0u32..6, 4)) {
            let data = random_table(seed);
            for alg in [Algorithm::C50, Algorithm::Cart, Algorithm::Chaid, Algorithm::Quest] {
                let t = train_tree(alg, &data, &TreeParams::default()).unwrap();
                let (class, conf) = t.predict(&row).unwrap();
                prop_assert!(class <= 1);
                prop_assert!((0.0..=1.0).contains(&conf));
                assert_counts_consistent(&t.root);
            }
        }

        #[test]
        fn training_is_deterministic(seed in 0u64..1000) {
            let data = random_table(seed);
            for alg in [Algorithm::C50, Algorithm::Cart, Algorithm::Chaid, Algorithm::Quest] {
                let p = TreeParams::default();
                prop_assert_eq!(train_tree(alg, &data, &p).unwrap(), train_tree(alg, &data, &p).unwrap());
            }
        }
    }

    #[test]
    fn unseen_code_stops_at_root() {
        let data = copy_table();
        let t = train_cart(&data, &TreeParams::default()).unwrap();
        let (class, _) = t.predict(&[7, 0]).unwrap();
        assert_eq!(class, t.root.prediction);
    }
}
