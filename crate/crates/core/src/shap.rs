//! Interventional Shapley attributions for trees and forests.
//!
//! The value of a coalition `S` for a row `x` is the mean model output over
//! background rows `z` on the hybrid row that takes `S` from `x` and the rest
//! from `z`. For a single `(x, z)` pair the tree path algorithm walks the tree
//! once, branching wherever `x` and `z` disagree on an undecided feature, and
//! credits each terminal node to the features assigned to `x` or `z` along its
//! path. Averaging over the background gives the attribution.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{CategoricalTable, Code};
use crate::error::{Error, Result};
use crate::eval::{make_folds, FoldPlan};
use crate::forest::{train_forest, Forest, ForestParams};
use crate::seed::derive_seed;
use crate::tree::{DecisionTree, TreeNode};

/// Largest feature count the brute-force oracle accepts.
pub const BRUTE_FORCE_MAX_FEATURES: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapAttribution {
    pub phi: Vec<f64>,
    pub base: f64,
    pub output: f64,
}

impl ShapAttribution {
    /// `|base + sum(phi) - output|`
    pub fn local_accuracy_error(&self) -> f64 {
        (self.base + self.phi.iter().sum::<f64>() - self.output).abs()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSet {
    rows: Vec<Vec<Code>>,
}

impl BackgroundSet {
    pub fn new(rows: Vec<Vec<Code>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyBackground);
        }
        let m = rows[0].len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::SchemaMismatch("background rows differ in length".into()));
        }
        Ok(BackgroundSet { rows })
    }

    /// All rows of `data` if it has at most `max_rows`, otherwise a seeded
    /// sample without replacement kept in table order.
    pub fn sample(data: &CategoricalTable, max_rows: usize, seed: u64) -> Result<Self> {
        let idx = sample_indices(data.n_rows(), max_rows, seed);
        BackgroundSet::new(idx.into_iter().map(|i| data.row(i).to_vec()).collect())
    }

    pub fn rows(&self) -> &[Vec<Code>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn sample_indices(n: usize, max: usize, seed: u64) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, n, max).into_vec();
    idx.sort_unstable();
    idx
}

/// What a tree contributes at the node where descent stops.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeValue {
    /// The node's class-1 rate.
    PositiveRate,
    /// 1 if the node predicts class 1, else 0.
    Vote,
}

impl NodeValue {
    fn of(self, node: &TreeNode) -> f64 {
        match self {
            NodeValue::PositiveRate => node.positive_rate,
            NodeValue::Vote => f64::from(node.prediction == 1),
        }
    }
}

/// A model whose output is an average of tree outputs.
pub trait TreeModel {
    fn n_features(&self) -> usize;
    fn components(&self) -> Vec<(&DecisionTree, NodeValue)>;

    fn output(&self, row: &[Code]) -> f64 {
        let parts = self.components();
        parts.iter().map(|(t, v)| v.of(t.reach(row))).sum::<f64>() / parts.len() as f64
    }
}

/// A single tree explains its class-1 probability.
impl TreeModel for DecisionTree {
    fn n_features(&self) -> usize {
        self.schema.len()
    }

    fn components(&self) -> Vec<(&DecisionTree, NodeValue)> {
        vec![(self, NodeValue::PositiveRate)]
    }
}

/// A forest explains its class-1 vote fraction.
impl TreeModel for Forest {
    fn n_features(&self) -> usize {
        self.schema.len()
    }

    fn components(&self) -> Vec<(&DecisionTree, NodeValue)> {
        self.trees.iter().map(|t| (t, NodeValue::Vote)).collect()
    }

    fn output(&self, row: &[Code]) -> f64 {
        self.vote_fraction(row)
    }
}

/// `p! q! / (p + q + 1)!`
fn path_weight(p: usize, q: usize) -> f64 {
    let (small, large) = (p.min(q), p.max(q));
    // small! / ((large + 1) (large + 2) ... (large + small + 1))
    let mut w = 1.0 / (large + 1) as f64;
    for i in 1..=small {
        w *= i as f64 / (large + 1 + i) as f64;
    }
    w
}

/// Shapley kernel weight `k! (m - k - 1)! / m!` for a coalition of size `k`
/// among `m` players.
pub fn shapley_weight(m: usize, k: usize) -> f64 {
    path_weight(k, m - k - 1)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Free,
    X,
    Z,
}

struct PairWalk<'a> {
    x: &'a [Code],
    z: &'a [Code],
    value: NodeValue,
    side: Vec<Side>,
    n_x: usize,
    n_z: usize,
    scale: f64,
}

impl PairWalk<'_> {
    fn terminal(&self, node: &TreeNode, phi: &mut [f64]) {
        let v = self.value.of(node) * self.scale;
        if v == 0.0 {
            return;
        }
        let wx = if self.n_x > 0 { path_weight(self.n_x - 1, self.n_z) } else { 0.0 };
        let wz = if self.n_z > 0 { path_weight(self.n_x, self.n_z - 1) } else { 0.0 };
        for (j, s) in self.side.iter().enumerate() {
            match s {
                Side::X => phi[j] += v * wx,
                Side::Z => phi[j] -= v * wz,
                Side::Free => {}
            }
        }
    }

    fn follow(&mut self, node: &TreeNode, branch: Option<usize>, phi: &mut [f64]) {
        match branch {
            Some(k) => self.walk(&node.children[k], phi),
            None => self.terminal(node, phi),
        }
    }

    fn walk(&mut self, node: &TreeNode, phi: &mut [f64]) {
        let Some(split) = &node.split else {
            self.terminal(node, phi);
            return;
        };
        let j = split.feature;
        let dx = split.branch_of(self.x[j]);
        let dz = split.branch_of(self.z[j]);
        match self.side[j] {
            Side::X => self.follow(node, dx, phi),
            Side::Z => self.follow(node, dz, phi),
            Side::Free if dx == dz => self.follow(node, dx, phi),
            Side::Free => {
                self.side[j] = Side::X;
                self.n_x += 1;
                self.follow(node, dx, phi);
                self.n_x -= 1;
                self.side[j] = Side::Z;
                self.n_z += 1;
                self.follow(node, dz, phi);
                self.n_z -= 1;
                self.side[j] = Side::Free;
            }
        }
    }
}

fn check_inputs(model: &dyn TreeModel, row: &[Code], background: &BackgroundSet) -> Result<()> {
    if background.is_empty() {
        return Err(Error::EmptyBackground);
    }
    let m = model.n_features();
    if row.len() != m || background.rows[0].len() != m {
        return Err(Error::SchemaMismatch(format!(
            "model has {m} features, row has {}, background rows have {}",
            row.len(),
            background.rows[0].len()
        )));
    }
    Ok(())
}

/// Exact interventional Shapley values by the tree path algorithm.
pub fn shap_values(model: &dyn TreeModel, row: &[Code], background: &BackgroundSet) -> Result<ShapAttribution> {
    check_inputs(model, row, background)?;
    let m = model.n_features();
    let parts = model.components();
    let scale = 1.0 / (parts.len() * background.len()) as f64;
    let mut phi = vec![0.0; m];
    for z in &background.rows {
        for &(tree, value) in &parts {
            let mut walk = PairWalk {
                x: row,
                z,
                value,
                side: vec![Side::Free; m],
                n_x: 0,
                n_z: 0,
                scale,
            };
            walk.walk(&tree.root, &mut phi);
        }
    }
    let base = background.rows.iter().map(|z| model.output(z)).sum::<f64>() / background.len() as f64;
    Ok(ShapAttribution {
        phi,
        base,
        output: model.output(row),
    })
}

/// Shapley values by enumerating all `2^m` coalitions of the same value
/// function as [`shap_values`].
pub fn brute_force_shap(model: &dyn TreeModel, row: &[Code], background: &BackgroundSet) -> Result<ShapAttribution> {
    check_inputs(model, row, background)?;
    let m = model.n_features();
    if m > BRUTE_FORCE_MAX_FEATURES {
        return Err(Error::TooManyFeatures {
            m,
            max: BRUTE_FORCE_MAX_FEATURES,
        });
    }
    let value = |mask: usize| -> f64 {
        let mut h = vec![0; m];
        let total: f64 = background
            .rows
            .iter()
            .map(|z| {
                for j in 0..m {
                    h[j] = if mask >> j & 1 == 1 { row[j] } else { z[j] };
                }
                model.output(&h)
            })
            .sum();
        total / background.len() as f64
    };
    let values: Vec<f64> = (0..1usize << m).map(value).collect();
    let mut phi = vec![0.0; m];
    for (j, p) in phi.iter_mut().enumerate() {
        for mask in 0..1usize << m {
            if mask >> j & 1 == 0 {
                let k = mask.count_ones() as usize;
                *p += shapley_weight(m, k) * (values[mask | 1 << j] - values[mask]);
            }
        }
    }
    Ok(ShapAttribution {
        phi,
        base: values[0],
        output: values[(1 << m) - 1],
    })
}

/// Mean absolute attribution per feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalImportance {
    pub features: Vec<String>,
    pub mean_abs: Vec<f64>,
}

impl GlobalImportance {
    /// Feature indices by descending importance, ties by index.
    pub fn order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.mean_abs.len()).collect();
        order.sort_by(|&a, &b| self.mean_abs[b].total_cmp(&self.mean_abs[a]).then(a.cmp(&b)));
        order
    }

    pub fn ranked(&self) -> Vec<(String, f64)> {
        self.order()
            .into_iter()
            .map(|i| (self.features[i].clone(), self.mean_abs[i]))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,feature,mean_abs_shap\n");
        for (r, (name, v)) in self.ranked().into_iter().enumerate() {
            let _ = writeln!(out, "{},{name},{v:.12}", r + 1);
        }
        out
    }
}

/// Attributions for `rows` (indices into `data`) and their mean absolute
/// values.
pub fn explain_rows(
    model: &dyn TreeModel,
    data: &CategoricalTable,
    rows: &[usize],
    background: &BackgroundSet,
) -> Result<(Vec<ShapAttribution>, GlobalImportance)> {
    let m = model.n_features();
    let mut sums = vec![0.0; m];
    let mut out = Vec::with_capacity(rows.len());
    for &i in rows {
        if i >= data.n_rows() {
            return Err(Error::InvalidParams(format!("row {i} out of range (table has {})", data.n_rows())));
        }
        let a = shap_values(model, data.row(i), background)?;
        for (s, p) in sums.iter_mut().zip(&a.phi) {
            *s += p.abs();
        }
        out.push(a);
    }
    let denom = rows.len().max(1) as f64;
    let importance = GlobalImportance {
        features: data.feature_names(),
        mean_abs: sums.into_iter().map(|s| s / denom).collect(),
    };
    Ok((out, importance))
}

/// Mean |SHAP| over every row of `data`.
pub fn global_importance(
    model: &dyn TreeModel,
    data: &CategoricalTable,
    background: &BackgroundSet,
) -> Result<GlobalImportance> {
    let rows: Vec<usize> = (0..data.n_rows()).collect();
    Ok(explain_rows(model, data, &rows, background)?.1)
}

/// Long-format attribution table: `row_id,feature,phi`.
pub fn attributions_csv(names: &[String], row_ids: &[usize], attributions: &[ShapAttribution]) -> String {
    let mut out = String::from("row_id,feature,phi\n");
    for (&id, a) in row_ids.iter().zip(attributions) {
        for (name, p) in names.iter().zip(&a.phi) {
            let _ = writeln!(out, "{id},{name},{p:.12}");
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EliminationSpec {
    pub folds: usize,
    pub stratified: bool,
    /// Background rows drawn from the training table for attribution.
    pub background_size: usize,
    /// Attribute only a seeded sample of this many rows per step.
    pub explain_rows: Option<usize>,
    pub seed: u64,
}

impl Default for EliminationSpec {
    fn default() -> Self {
        EliminationSpec {
            folds: 10,
            stratified: true,
            background_size: 128,
            explain_rows: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EliminationStep {
    pub features: Vec<String>,
    pub accuracy: f64,
    pub fold_accuracies: Vec<f64>,
    /// Mean |SHAP| of the active features, in active order; empty on the
    /// final single-feature step.
    pub importance: Vec<f64>,
    pub dropped: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EliminationTrace {
    pub steps: Vec<EliminationStep>,
    pub selected: usize,
    pub fold_plan_hash: String,
}

impl EliminationTrace {
    pub fn selected_features(&self) -> &[String] {
        &self.steps[self.selected].features
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn forest_cv(data: &CategoricalTable, params: &ForestParams, plan: &FoldPlan) -> Result<Vec<f64>> {
    (0..plan.k)
        .map(|f| {
            let train = data.subset(&plan.train_indices(f))?;
            let test = data.subset(&plan.folds[f])?;
            let forest = train_forest(&train, params).map_err(|e| Error::Fold {
                fold: f,
                source: Box::new(e),
            })?;
            forest.accuracy(&test)
        })
        .collect()
}

/// Backward elimination driven by forest SHAP importance.
///
/// Each step records the cross-validated forest accuracy on the active
/// features, then trains a forest on all rows, ranks the active features by
/// mean |SHAP| and drops the least important (ties drop the later feature).
/// The loop ends with one feature; the selected step has the highest
/// accuracy, ties going to the larger feature set. All steps share one fold
/// plan.
pub fn backward_eliminate(
    data: &CategoricalTable,
    forest_params: &ForestParams,
    spec: &EliminationSpec,
) -> Result<EliminationTrace> {
    if data.n_features() < 2 {
        return Err(Error::InvalidParams("backward elimination needs at least 2 features".into()));
    }
    let plan = make_folds(data.n_rows(), spec.folds, spec.stratified, data.target(), derive_seed(spec.seed, "folds"))?;
    let mut active: Vec<usize> = (0..data.n_features()).collect();
    let mut steps = Vec::new();
    loop {
        let view = data.project(&active)?;
        let params = ForestParams {
            features_per_split: forest_params
                .features_per_split
                .map(|k| k.min(active.len())),
            ..forest_params.clone()
        };
        let fold_accuracies = forest_cv(&view, &params, &plan)?;
        let accuracy = fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64;
        let names = view.feature_names();
        log::info!("elimination step with {} features: accuracy {accuracy:.4}", active.len());
        if active.len() == 1 {
            steps.push(EliminationStep {
                features: names,
                accuracy,
                fold_accuracies,
                importance: Vec::new(),
                dropped: None,
            });
            break;
        }
        let forest = train_forest(&view, &params)?;
        let background = BackgroundSet::sample(&view, spec.background_size, derive_seed(spec.seed, "background"))?;
        let rows = sample_indices(
            view.n_rows(),
            spec.explain_rows.unwrap_or(usize::MAX),
            derive_seed(spec.seed, "explain"),
        );
        let (_, importance) = explain_rows(&forest, &view, &rows, &background)?;
        let drop = *importance.order().last().expect("at least two features");
        steps.push(EliminationStep {
            features: names.clone(),
            accuracy,
            fold_accuracies,
            importance: importance.mean_abs,
            dropped: Some(names[drop].clone()),
        });
        active.remove(drop);
    }
    let mut selected = 0;
    for (i, s) in steps.iter().enumerate() {
        if s.accuracy > steps[selected].accuracy {
            selected = i;
        }
    }
    Ok(EliminationTrace {
        steps,
        selected,
        fold_plan_hash: plan.hash(),
    })
}
