//! One train/predict contract over every model family.

use serde::{Deserialize, Serialize};

use crate::baselines::{
    train_bayes_net, train_decision_list, train_logistic, train_mlp, BayesNetModel, BayesNetOptions,
    DecisionListModel, DecisionListOptions, LogisticModel, LogisticOptions, MlpModel, MlpOptions,
};
use crate::dataset::{CategoricalTable, Code};
use crate::error::{Error, Result};
use crate::forest::{train_forest, Forest, ForestParams};
use crate::seed::derive_seed;
use crate::tree::{prune_c50, train_tree, Algorithm, DecisionTree, TreeParams};

pub trait Classifier {
    fn n_features(&self) -> usize;

    /// Probability of class 1 for a row that already matches the schema width.
    fn proba(&self, row: &[Code]) -> f64;

    fn label(&self, row: &[Code]) -> u8 {
        u8::from(self.proba(row) >= 0.5)
    }

    fn predict_proba(&self, row: &[Code]) -> Result<f64> {
        check_width(self.n_features(), row)?;
        Ok(self.proba(row))
    }

    fn predict(&self, row: &[Code]) -> Result<u8> {
        check_width(self.n_features(), row)?;
        Ok(self.label(row))
    }
}

fn check_width(expected: usize, row: &[Code]) -> Result<()> {
    if row.len() != expected {
        return Err(Error::SchemaMismatch(format!("row has {} values, model expects {expected}", row.len())));
    }
    Ok(())
}

/// A model family with its settings. C5.0 trees are pruned with the
/// severity in their parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ModelSpec {
    Majority,
    Tree {
        algorithm: Algorithm,
        #[serde(default)]
        params: TreeParams,
    },
    Forest {
        #[serde(default)]
        params: ForestParams,
    },
    Logistic {
        #[serde(default)]
        params: LogisticOptions,
    },
    Mlp {
        #[serde(default)]
        params: MlpOptions,
    },
    BayesNet {
        #[serde(default)]
        params: BayesNetOptions,
    },
    DecisionList {
        #[serde(default)]
        params: DecisionListOptions,
    },
}

impl ModelSpec {
    pub fn tree(algorithm: Algorithm) -> Self {
        ModelSpec::Tree { algorithm, params: TreeParams::default() }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Majority => "Majority",
            ModelSpec::Tree { algorithm, .. } => algorithm.name(),
            ModelSpec::Forest { .. } => "Random Forest",
            ModelSpec::Logistic { .. } => "Logistic Regression",
            ModelSpec::Mlp { .. } => "Neural Network",
            ModelSpec::BayesNet { .. } => "Bayesian Network",
            ModelSpec::DecisionList { .. } => "Decision List",
        }
    }

    /// The eight compared families with default settings.
    pub fn roster() -> Vec<ModelSpec> {
        vec![
            ModelSpec::tree(Algorithm::C50),
            ModelSpec::tree(Algorithm::Chaid),
            ModelSpec::tree(Algorithm::Cart),
            ModelSpec::tree(Algorithm::Quest),
            ModelSpec::BayesNet { params: BayesNetOptions::default() },
            ModelSpec::Logistic { params: LogisticOptions::default() },
            ModelSpec::Mlp { params: MlpOptions::default() },
            ModelSpec::DecisionList { params: DecisionListOptions::default() },
        ]
    }

    /// Replace the seed of stochastic families with one derived from `seed`
    /// and the family name.
    pub fn with_seed(mut self, seed: u64) -> Self {
        let derived = derive_seed(seed, &format!("model/{}", self.name()));
        match &mut self {
            ModelSpec::Forest { params } => params.seed = derived,
            ModelSpec::Mlp { params } => params.seed = derived,
            _ => {}
        }
        self
    }

    /// Settings as a JSON value (the `params` object, or null).
    pub fn params_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("model spec serializes");
        v.get_mut("params").map(serde_json::Value::take).unwrap_or(serde_json::Value::Null)
    }

    /// Copy with `params.<key>` overridden; unknown keys are an error.
    pub fn with_param(&self, key: &str, value: serde_json::Value) -> Result<Self> {
        let mut v = serde_json::to_value(self)?;
        let params = v
            .get_mut("params")
            .and_then(serde_json::Value::as_object_mut)
            .ok_or_else(|| Error::InvalidParams(format!("{} has no tunable parameters", self.name())))?;
        if !params.contains_key(key) {
            return Err(Error::InvalidParams(format!("{} has no parameter {key}", self.name())));
        }
        params.insert(key.to_string(), value);
        serde_json::from_value(v).map_err(|e| Error::InvalidParams(format!("{}: {key}: {e}", self.name())))
    }

    pub fn fit(&self, data: &CategoricalTable) -> Result<Model> {
        Ok(match self {
            ModelSpec::Majority => {
                if data.n_rows() == 0 {
                    return Err(Error::InvalidTable("training table is empty".into()));
                }
                let rate = data.positives() as f64 / data.n_rows() as f64;
                Model::Majority { n_features: data.n_features(), class: u8::from(rate >= 0.5), rate }
            }
            ModelSpec::Tree { algorithm, params } => {
                let tree = train_tree(*algorithm, data, params)?;
                if *algorithm == Algorithm::C50 {
                    Model::Tree(prune_c50(&tree, params.pruning_severity))
                } else {
                    Model::Tree(tree)
                }
            }
            ModelSpec::Forest { params } => Model::Forest(train_forest(data, params)?),
            ModelSpec::Logistic { params } => wrap(data, Baseline::Logistic(train_logistic(data, params)?)),
            ModelSpec::Mlp { params } => wrap(data, Baseline::Mlp(train_mlp(data, params)?)),
            ModelSpec::BayesNet { params } => wrap(data, Baseline::BayesNet(train_bayes_net(data, params)?)),
            ModelSpec::DecisionList { params } => {
                wrap(data, Baseline::DecisionList(train_decision_list(data, params)?))
            }
        })
    }
}

fn wrap(data: &CategoricalTable, model: Baseline) -> Model {
    Model::Baseline { n_features: data.n_features(), model }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Baseline {
    Logistic(LogisticModel),
    Mlp(MlpModel),
    BayesNet(BayesNetModel),
    DecisionList(DecisionListModel),
}

/// A trained model of any family.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Majority { n_features: usize, class: u8, rate: f64 },
    Tree(DecisionTree),
    Forest(Forest),
    Baseline { n_features: usize, model: Baseline },
}

impl Classifier for Model {
    fn n_features(&self) -> usize {
        match self {
            Model::Majority { n_features, .. } | Model::Baseline { n_features, .. } => *n_features,
            Model::Tree(t) => t.n_features(),
            Model::Forest(f) => f.n_features(),
        }
    }

    fn proba(&self, row: &[Code]) -> f64 {
        match self {
            Model::Majority { rate, .. } => *rate,
            Model::Tree(t) => t.reach(row).positive_rate,
            Model::Forest(f) => f.vote_fraction(row),
            Model::Baseline { model, .. } => match model {
                Baseline::Logistic(m) => m.predict_proba(row),
                Baseline::Mlp(m) => m.predict_proba(row),
                Baseline::BayesNet(m) => m.predict_proba(row),
                Baseline::DecisionList(m) => m.predict_proba(row),
            },
        }
    }

    /// Trees answer with the majority class of the reached node and forests
    /// with their vote rule; the rest threshold the probability at one half.
    fn label(&self, row: &[Code]) -> u8 {
        match self {
            Model::Majority { class, .. } => *class,
            Model::Tree(t) => t.reach(row).prediction,
            Model::Forest(f) => f.predict(row).map(|p| p.0).unwrap_or(0),
            Model::Baseline { .. } => u8::from(self.proba(row) >= 0.5),
        }
    }
}

impl Model {
    pub fn accuracy(&self, data: &CategoricalTable) -> Result<f64> {
        if data.n_rows() == 0 {
            return Err(Error::InvalidTable("evaluation table is empty".into()));
        }
        let mut correct = 0;
        for (row, &y) in data.rows().iter().zip(data.target()) {
            correct += usize::from(self.predict(row)? == y);
        }
        Ok(correct as f64 / data.n_rows() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{binary_schema, generate_synthetic, GenerativeRules, TargetModel, Term};

    fn data() -> CategoricalTable {
        let target = TargetModel::Threshold { intercept: -0.5, terms: vec![Term::new(&[(0, 1)], 1.0)] };
        generate_synthetic(&binary_schema(3), 120, 2, &GenerativeRules::uniform(3, target)).unwrap()
    }

    #[test]
    fn every_family_fits_separable_data() {
        let data = data();
        let mut specs = ModelSpec::roster();
        specs.push(ModelSpec::Forest { params: ForestParams { n_trees: 15, ..Default::default() } });
        for spec in specs {
            let model = spec.fit(&data).unwrap();
            assert!(model.accuracy(&data).unwrap() >= 0.95, "{}", spec.name());
            for row in data.rows() {
                let p = model.predict_proba(row).unwrap();
                assert!((0.0..=1.0).contains(&p));
            }
        }
    }

    #[test]
    fn majority_predicts_prior() {
        let data = data();
        let model = ModelSpec::Majority.fit(&data).unwrap();
        let rate = data.positives() as f64 / data.n_rows() as f64;
        assert_eq!(model.predict_proba(&[0, 0, 0]).unwrap(), rate);
        assert!(matches!(model.predict(&[0, 0]), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn param_override() {
        let spec = ModelSpec::tree(Algorithm::Cart)
            .with_param("min_records_per_branch", serde_json::json!(7))
            .unwrap();
        match &spec {
            ModelSpec::Tree { params, .. } => assert_eq!(params.min_records_per_branch, 7),
            _ => unreachable!(),
        }
        assert!(spec.with_param("nope", serde_json::json!(1)).is_err());
        assert!(ModelSpec::Majority.with_param("x", serde_json::json!(1)).is_err());
        assert!(spec.with_param("min_records_per_branch", serde_json::json!("a")).is_err());
    }

    #[test]
    fn spec_round_trips_through_toml() {
        for spec in ModelSpec::roster() {
            let text = toml::to_string(&spec).unwrap();
            let back: ModelSpec = toml::from_str(&text).unwrap();
            assert_eq!(back, spec);
        }
        let parsed: ModelSpec = toml::from_str("family = \"tree\"\nalgorithm = \"c50\"\n").unwrap();
        assert_eq!(parsed, ModelSpec::tree(Algorithm::C50));
    }
}
