use serde::{Deserialize, Serialize};

use super::{check_schema, class_counts, route, Algorithm, DecisionTree, TreeNode};
use crate::criteria::{entropy_unchecked, gini_unchecked, ClassCounts};
use crate::dataset::CategoricalTable;
use crate::error::Result;

/// Normalized per-feature weights in schema order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub features: Vec<String>,
    pub weights: Vec<f64>,
}

impl Importance {
    /// `(feature, weight)` by descending weight, ties by schema order.
    pub fn ranked(&self) -> Vec<(String, f64)> {
        let mut order: Vec<usize> = (0..self.weights.len()).collect();
        order.sort_by(|&a, &b| self.weights[b].total_cmp(&self.weights[a]).then(a.cmp(&b)));
        order.into_iter().map(|i| (self.features[i].clone(), self.weights[i])).collect()
    }

    /// Tab-separated ranking with four decimals.
    pub fn render(&self) -> String {
        let mut out = String::from("feature\timportance\n");
        for (name, w) in self.ranked() {
            out.push_str(&format!("{name}\t{w:.4}\n"));
        }
        out
    }
}

/// Impurity-reduction importance measured by routing `data` through the tree:
/// each internal node adds its share of rows times the reduction of the
/// grower's impurity (entropy for C5.0, Gini otherwise). Rows stopped at a
/// node by an unseen code count as their own group. Weights sum to 1 unless
/// no split reduces impurity, in which case all are 0.
pub fn predictor_importance(tree: &DecisionTree, data: &CategoricalTable) -> Result<Importance> {
    check_schema(&tree.schema, data)?;
    let impurity = |c: &ClassCounts| -> f64 {
        let t = c.total();
        if t == 0 {
            return 0.0;
        }
        match tree.algorithm {
            Algorithm::C50 => entropy_unchecked(c.as_slice(), t),
            _ => gini_unchecked(c.as_slice(), t, &tree.params.cost),
        }
    };
    let mut raw = vec![0.0; tree.n_features()];
    let n = data.n_rows() as f64;
    let idx: Vec<usize> = (0..data.n_rows()).collect();
    accumulate(&tree.root, data, &idx, n, &impurity, &mut raw);
    let total: f64 = raw.iter().sum();
    let weights = if total > 0.0 {
        raw.iter().map(|w| w / total).collect()
    } else {
        vec![0.0; raw.len()]
    };
    Ok(Importance {
        features: tree.schema.iter().map(|f| f.name.clone()).collect(),
        weights,
    })
}

fn accumulate(
    node: &TreeNode,
    data: &CategoricalTable,
    idx: &[usize],
    n: f64,
    impurity: &dyn Fn(&ClassCounts) -> f64,
    raw: &mut [f64],
) {
    let Some(split) = &node.split else {
        return;
    };
    if idx.is_empty() {
        return;
    }
    let (parts, stopped) = route(data, idx, split);
    let here = idx.len() as f64;
    let mut children = 0.0;
    for group in parts.iter().chain(std::iter::once(&stopped)) {
        if !group.is_empty() {
            children += group.len() as f64 / here * impurity(&class_counts(data, group));
        }
    }
    let reduction = (impurity(&class_counts(data, idx)) - children).max(0.0);
    raw[split.feature] += here / n * reduction;
    for (child, part) in node.children.iter().zip(&parts) {
        accumulate(child, data, part, n, impurity, raw);
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_util::*;
    use super::super::{train_c50, train_cart, TreeParams};
    use super::*;
    use crate::dataset::{binary_schema, generate_synthetic, GenerativeRules, TargetModel, Term};

    #[test]
    fn single_split_gets_all_weight() {
        let t = copy_table();
        let tree = train_c50(&t, &TreeParams::default()).unwrap();
        let imp = predictor_importance(&tree, &t).unwrap();
        assert_eq!(imp.weights, vec![1.0, 0.0]);
        assert_eq!(imp.ranked()[0].0, "f0");
    }

    #[test]
    fn leaf_has_zero_weights() {
        let t = xor_table();
        let tree = train_c50(&t, &TreeParams::default()).unwrap();
        assert_eq!(predictor_importance(&tree, &t).unwrap().weights, vec![0.0, 0.0]);
    }

    #[test]
    fn unused_features_are_zero_and_weights_sum_to_one() {
        let target = TargetModel::Logistic {
            intercept: -1.0,
            terms: (0..8).map(|i| Term::new(&[(i, 1)], 0.3 + 0.1 * i as f64)).collect(),
        };
        let data = generate_synthetic(&binary_schema(10), 600, 5, &GenerativeRules::uniform(10, target)).unwrap();
        let tree = train_cart(&data, &TreeParams::default()).unwrap();
        let imp = predictor_importance(&tree, &data).unwrap();
        let used = tree.used_features();
        let zeros = imp.weights.iter().filter(|&&w| w == 0.0).count();
        assert_eq!(zeros, imp.weights.len() - used.len());
        assert!((imp.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(imp.render().lines().count() == 11);
    }
}
