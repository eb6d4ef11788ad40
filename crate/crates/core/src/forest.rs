//! Bagged ensembles of unpruned binary Gini trees with per-node feature
//! sampling.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{schema_hash, CategoricalTable, Code, FeatureSpec};
use crate::error::{Error, Result};
use crate::tree::{check_schema, grow_cart, Algorithm, DecisionTree, FeatureSampler, TreeNode, TreeParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features eligible at each node; `None` means `ceil(sqrt(m))`.
    pub features_per_split: Option<usize>,
    /// Rows drawn per tree; `None` means `n`.
    pub sample_size: Option<usize>,
    /// Draw rows with replacement. When false every tree sees all rows once.
    pub bootstrap: bool,
    pub min_records: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
    /// Resolve a 50/50 vote as class 1.
    pub tie_to_positive: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 500,
            features_per_split: None,
            sample_size: None,
            bootstrap: true,
            min_records: 1,
            max_depth: None,
            seed: 0,
            tie_to_positive: true,
        }
    }
}

impl ForestParams {
    pub fn resolved_features_per_split(&self, m: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (m as f64).sqrt().ceil() as usize)
            .clamp(1, m.max(1))
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            min_records_per_branch: self.min_records,
            max_depth: self.max_depth,
            ..TreeParams::default()
        }
    }

    fn validate(&self, m: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidParams("n_trees must be at least 1".into()));
        }
        if let Some(k) = self.features_per_split {
            if k == 0 || k > m {
                return Err(Error::InvalidParams(format!("features_per_split {k} outside 1..={m}")));
            }
        }
        if self.sample_size == Some(0) {
            return Err(Error::InvalidParams("sample_size must be at least 1".into()));
        }
        if self.min_records == 0 {
            return Err(Error::InvalidParams("min_records must be at least 1".into()));
        }
        Ok(())
    }
}

/// Record of one split decision made while training with an audit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitAudit {
    pub tree: usize,
    pub candidates: Vec<usize>,
    pub feature: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Forest {
    pub params: ForestParams,
    pub schema: Vec<FeatureSpec>,
    pub trees: Vec<DecisionTree>,
    /// Training-table size, needed to recompute bags.
    pub n_rows: usize,
}

#[derive(Serialize, Deserialize)]
struct ForestFile {
    params: ForestParams,
    schema: Vec<FeatureSpec>,
    schema_hash: String,
    n_rows: usize,
    trees: Vec<TreeNode>,
}

fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

fn draw_bag(rng: &mut ChaCha8Rng, params: &ForestParams, n: usize) -> Vec<usize> {
    if params.bootstrap {
        let size = params.sample_size.unwrap_or(n);
        (0..size).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    }
}

struct RandomSubspace<'a> {
    rng: &'a mut ChaCha8Rng,
    k: usize,
    tree: usize,
    audit: Option<&'a mut Vec<SplitAudit>>,
}

impl FeatureSampler for RandomSubspace<'_> {
    fn candidates(&mut self, n_features: usize) -> Vec<usize> {
        if self.k >= n_features {
            return (0..n_features).collect();
        }
        let mut picked = sample(self.rng, n_features, self.k).into_vec();
        picked.sort_unstable();
        picked
    }

    fn chosen(&mut self, candidates: &[usize], feature: usize) {
        if let Some(log) = self.audit.as_deref_mut() {
            log.push(SplitAudit {
                tree: self.tree,
                candidates: candidates.to_vec(),
                feature,
            });
        }
    }
}

pub fn train_forest(data: &CategoricalTable, params: &ForestParams) -> Result<Forest> {
    train(data, params, None)
}

/// Train while logging every node's sampled feature subset and chosen split.
pub fn train_forest_audited(data: &CategoricalTable, params: &ForestParams) -> Result<(Forest, Vec<SplitAudit>)> {
    let mut log = Vec::new();
    let forest = train(data, params, Some(&mut log))?;
    Ok((forest, log))
}

fn train(data: &CategoricalTable, params: &ForestParams, mut audit: Option<&mut Vec<SplitAudit>>) -> Result<Forest> {
    let (n, m) = (data.n_rows(), data.n_features());
    if n < 2 {
        return Err(Error::InvalidTable("a forest needs at least 2 rows".into()));
    }
    if m == 0 {
        return Err(Error::InvalidTable("training table has no features".into()));
    }
    params.validate(m)?;
    let tree_params = params.tree_params();
    let k = params.resolved_features_per_split(m);
    let mut trees = Vec::with_capacity(params.n_trees);
    for t in 0..params.n_trees {
        let mut rng = tree_rng(params.seed, t);
        let bag = draw_bag(&mut rng, params, n);
        let mut sampler = RandomSubspace {
            rng: &mut rng,
            k,
            tree: t,
            audit: audit.as_deref_mut(),
        };
        let root = grow_cart(data, &bag, &tree_params, &mut sampler);
        trees.push(DecisionTree::new(Algorithm::Cart, tree_params.clone(), data.schema(), root));
    }
    Ok(Forest {
        params: params.clone(),
        schema: data.schema().to_vec(),
        trees,
        n_rows: n,
    })
}

impl Forest {
    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    /// Row indices (with repeats) the `t`-th tree was trained on.
    pub fn bag(&self, t: usize) -> Vec<usize> {
        draw_bag(&mut tree_rng(self.params.seed, t), &self.params, self.n_rows)
    }

    /// Fraction of trees predicting class 1.
    pub fn vote_fraction(&self, row: &[Code]) -> f64 {
        let votes = self.trees.iter().filter(|t| t.reach(row).prediction == 1).count();
        votes as f64 / self.trees.len() as f64
    }

    fn label(&self, p: f64) -> u8 {
        u8::from(if self.params.tie_to_positive { p >= 0.5 } else { p > 0.5 })
    }

    /// Class and class-1 vote fraction.
    pub fn predict(&self, row: &[Code]) -> Result<(u8, f64)> {
        if row.len() != self.schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "row has {} values, forest expects {}",
                row.len(),
                self.schema.len()
            )));
        }
        let p = self.vote_fraction(row);
        Ok((self.label(p), p))
    }

    /// Accuracy over rows that at least one tree left out of its bag; each
    /// such row is voted on only by those trees.
    pub fn oob_accuracy(&self, data: &CategoricalTable) -> Result<f64> {
        check_schema(&self.schema, data)?;
        if data.n_rows() != self.n_rows {
            return Err(Error::SchemaMismatch(format!(
                "forest was trained on {} rows, table has {}",
                self.n_rows,
                data.n_rows()
            )));
        }
        let mut in_bag = vec![vec![false; self.trees.len()]; self.n_rows];
        for t in 0..self.trees.len() {
            for i in self.bag(t) {
                in_bag[i][t] = true;
            }
        }
        let (mut correct, mut counted) = (0usize, 0usize);
        for (i, row) in data.rows().iter().enumerate() {
            let voters: Vec<&DecisionTree> = self
                .trees
                .iter()
                .enumerate()
                .filter(|(t, _)| !in_bag[i][*t])
                .map(|(_, tree)| tree)
                .collect();
            if voters.is_empty() {
                continue;
            }
            let p = voters.iter().filter(|t| t.reach(row).prediction == 1).count() as f64 / voters.len() as f64;
            counted += 1;
            correct += usize::from(self.label(p) == data.target()[i]);
        }
        if counted == 0 {
            return Err(Error::NoOutOfBagRows);
        }
        Ok(correct as f64 / counted as f64)
    }

    pub fn accuracy(&self, data: &CategoricalTable) -> Result<f64> {
        check_schema(&self.schema, data)?;
        let correct = data
            .rows()
            .iter()
            .zip(data.target())
            .filter(|(r, &y)| self.label(self.vote_fraction(r)) == y)
            .count();
        Ok(correct as f64 / data.n_rows() as f64)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ForestFile {
            params: self.params.clone(),
            schema: self.schema.clone(),
            schema_hash: schema_hash(&self.schema),
            n_rows: self.n_rows,
            trees: self.trees.iter().map(|t| t.root.clone()).collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ForestFile = serde_json::from_str(text)?;
        if file.schema_hash != schema_hash(&file.schema) {
            return Err(Error::SchemaMismatch("stored schema hash does not match schema".into()));
        }
        let tree_params = file.params.tree_params();
        let trees = file
            .trees
            .into_iter()
            .map(|root| DecisionTree::new(Algorithm::Cart, tree_params.clone(), &file.schema, root))
            .collect();
        Ok(Forest {
            params: file.params,
            schema: file.schema,
            trees,
            n_rows: file.n_rows,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{binary_schema, generate_synthetic, planted_relevance, GenerativeRules, TargetModel, Term};
    use crate::tree::train_cart;

    fn relevance_data(n: usize, seed: u64) -> CategoricalTable {
        let (schema, rules, _) = planted_relevance();
        generate_synthetic(&schema, n, seed, &rules).unwrap()
    }

    #[test]
    fn degenerate_forest_is_cart() {
        let data = relevance_data(300, 1);
        let params = ForestParams {
            n_trees: 1,
            features_per_split: Some(10),
            bootstrap: false,
            min_records: 2,
            ..ForestParams::default()
        };
        let forest = train_forest(&data, &params).unwrap();
        assert_eq!(forest.trees[0], train_cart(&data, &TreeParams::default()).unwrap());
    }

    #[test]
    fn deterministic_for_seed() {
        let data = relevance_data(200, 2);
        let params = ForestParams { n_trees: 20, seed: 9, ..ForestParams::default() };
        let a = train_forest(&data, &params).unwrap();
        let b = train_forest(&data, &params).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let c = train_forest(&data, &ForestParams { seed: 10, ..params }).unwrap();
        assert_ne!(a.to_json().unwrap(), c.to_json().unwrap());
    }

    #[test]
    fn json_round_trip() {
        let data = relevance_data(100, 3);
        let f = train_forest(&data, &ForestParams { n_trees: 5, ..ForestParams::default() }).unwrap();
        let back = Forest::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(f, back);
    }

    #[test]
    fn bags_depend_only_on_seed_and_index() {
        let data = relevance_data(100, 3);
        let p = ForestParams { n_trees: 4, seed: 5, ..ForestParams::default() };
        let f = train_forest(&data, &p).unwrap();
        let g = train_forest(&data, &ForestParams { n_trees: 8, ..p }).unwrap();
        for t in 0..4 {
            assert_eq!(f.bag(t), g.bag(t));
            assert_eq!(f.trees[t], g.trees[t]);
        }
    }

    #[test]
    fn vote_fraction_is_mean_indicator() {
        let data = relevance_data(200, 4);
        let f = train_forest(&data, &ForestParams { n_trees: 3, ..ForestParams::default() }).unwrap();
        for row in data.rows().iter().take(50) {
            let mean = f.trees.iter().map(|t| f64::from(t.reach(row).prediction)).sum::<f64>() / 3.0;
            let (class, p) = f.predict(row).unwrap();
            assert!((p - mean).abs() <= 1e-15);
            assert_eq!(class, u8::from(p >= 0.5));
        }
    }

    #[test]
    fn sampled_features_contain_split() {
        let data = relevance_data(300, 5);
        let params = ForestParams { n_trees: 10, ..ForestParams::default() };
        let (forest, audit) = train_forest_audited(&data, &params).unwrap();
        let splits: usize = forest
            .trees
            .iter()
            .map(|t| t.root.preorder().iter().filter(|n| !n.is_leaf()).count())
            .sum();
        assert_eq!(audit.len(), splits);
        for a in &audit {
            assert_eq!(a.candidates.len(), 4);
            assert!(a.candidates.contains(&a.feature));
        }
    }

    #[test]
    fn full_bag_has_no_oob_rows() {
        let data = relevance_data(50, 6);
        let f = train_forest(&data, &ForestParams { n_trees: 1, bootstrap: false, ..ForestParams::default() }).unwrap();
        assert!(matches!(f.oob_accuracy(&data), Err(Error::NoOutOfBagRows)));
    }

    #[test]
    fn oob_beats_majority_on_planted_relevance() {
        let data = relevance_data(740, 7);
        let f = train_forest(&data, &ForestParams { n_trees: 100, ..ForestParams::default() }).unwrap();
        let oob = f.oob_accuracy(&data).unwrap();
        let pos = data.positives() as f64 / data.n_rows() as f64;
        let majority = pos.max(1.0 - pos);
        assert!((0.0..=1.0).contains(&oob));
        assert!(oob >= majority + 0.10, "oob {oob} vs majority {majority}");
    }

    #[test]
    fn separable_data_oob() {
        let target = TargetModel::Threshold { intercept: -0.5, terms: vec![Term::new(&[(0, 1)], 1.0)] };
        let data = generate_synthetic(&binary_schema(4), 300, 8, &GenerativeRules::uniform(4, target)).unwrap();
        let f = train_forest(&data, &ForestParams { n_trees: 50, ..ForestParams::default() }).unwrap();
        assert!(f.oob_accuracy(&data).unwrap() >= 0.95);
    }

    #[test]
    fn rejects_bad_params() {
        let data = relevance_data(20, 9);
        assert!(train_forest(&data, &ForestParams { n_trees: 0, ..ForestParams::default() }).is_err());
        assert!(train_forest(&data, &ForestParams { features_per_split: Some(11), ..ForestParams::default() }).is_err());
    }
}
