use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::cv::cross_validate;
use super::folds::FoldPlan;
use crate::dataset::CategoricalTable;
use crate::error::{Error, Result};
use crate::model::ModelSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum SearchMode {
    Grid,
    Random { budget: usize },
}

/// Candidate values per parameter name of a family's settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpec {
    #[serde(flatten)]
    pub mode: SearchMode,
    pub domains: BTreeMap<String, Vec<Value>>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub params: BTreeMap<String, Value>,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: usize,
    pub best_spec: ModelSpec,
    pub trials: Vec<Trial>,
}

impl SearchSpec {
    /// Parameter assignments in trial order. Grid order varies the last
    /// parameter name fastest.
    pub fn candidates(&self) -> Result<Vec<BTreeMap<String, Value>>> {
        if let Some((k, _)) = self.domains.iter().find(|(_, v)| v.is_empty()) {
            return Err(Error::InvalidParams(format!("search domain {k} is empty")));
        }
        let keys: Vec<&String> = self.domains.keys().collect();
        match self.mode {
            SearchMode::Grid => {
                let mut out = vec![BTreeMap::new()];
                for key in keys {
                    out = out
                        .into_iter()
                        .flat_map(|partial| {
                            self.domains[key].iter().map(move |v| {
                                let mut next = partial.clone();
                                next.insert(key.clone(), v.clone());
                                next
                            })
                        })
                        .collect();
                }
                Ok(out)
            }
            SearchMode::Random { budget } => {
                if budget == 0 {
                    return Err(Error::InvalidParams("random search budget must be at least 1".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                Ok((0..budget)
                    .map(|_| {
                        keys.iter()
                            .map(|&k| {
                                let d = &self.domains[k];
                                (k.clone(), d[rng.random_range(0..d.len())].clone())
                            })
                            .collect()
                    })
                    .collect())
            }
        }
    }
}

pub fn apply_params(base: &ModelSpec, params: &BTreeMap<String, Value>) -> Result<ModelSpec> {
    params.iter().try_fold(base.clone(), |spec, (k, v)| spec.with_param(k, v.clone()))
}

/// Score every candidate by cross-validated mean accuracy; the first trial
/// with the highest mean wins.
pub fn search(spec: &SearchSpec, base: &ModelSpec, data: &CategoricalTable, plan: &FoldPlan) -> Result<SearchResult> {
    let mut trials: Vec<Trial> = Vec::new();
    let mut best: Option<(usize, ModelSpec)> = None;
    for params in spec.candidates()? {
        let candidate = apply_params(base, &params)?;
        let cv = cross_validate(&candidate, data, plan)?;
        log::debug!("{} {params:?}: {:.4}", base.name(), cv.mean_accuracy);
        if best.as_ref().is_none_or(|(b, _)| cv.mean_accuracy > trials[*b].mean_accuracy) {
            best = Some((trials.len(), candidate));
        }
        trials.push(Trial { params, fold_accuracies: cv.fold_accuracies, mean_accuracy: cv.mean_accuracy });
    }
    let (best, best_spec) = best.expect("at least one candidate");
    Ok(SearchResult { best, best_spec, trials })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{planted_noisy_rule, generate_synthetic};
    use crate::eval::make_folds;
    use crate::tree::Algorithm;
    use serde_json::json;

    fn domains(pairs: &[(&str, Vec<Value>)]) -> BTreeMap<String, Vec<Value>> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn grid_enumerates_product() {
        let spec = SearchSpec {
            mode: SearchMode::Grid,
            domains: domains(&[("a", vec![json!(1), json!(2)]), ("b", vec![json!("x"), json!("y"), json!("z")])]),
            seed: 0,
        };
        let c = spec.candidates().unwrap();
        assert_eq!(c.len(), 6);
        assert_eq!(c[1]["a"], json!(1));
        assert_eq!(c[1]["b"], json!("y"));
    }

    #[test]
    fn random_is_seeded() {
        let spec = SearchSpec {
            mode: SearchMode::Random { budget: 8 },
            domains: domains(&[("a", (0..10).map(|i| json!(i)).collect())]),
            seed: 5,
        };
        assert_eq!(spec.candidates().unwrap(), spec.candidates().unwrap());
        let other = SearchSpec { seed: 6, ..spec.clone() };
        assert_ne!(spec.candidates().unwrap(), other.candidates().unwrap());
        let zero = SearchSpec { mode: SearchMode::Random { budget: 0 }, ..spec };
        assert!(zero.candidates().is_err());
    }

    #[test]
    fn single_point_and_dominance() {
        let (schema, rules) = planted_noisy_rule();
        let data = generate_synthetic(&schema, 300, 1, &rules).unwrap();
        let plan = make_folds(300, 5, true, data.target(), 3).unwrap();
        let base = ModelSpec::tree(Algorithm::Cart);
        let one = SearchSpec { mode: SearchMode::Grid, domains: domains(&[("max_depth", vec![json!(2)])]), seed: 0 };
        let r = search(&one, &base, &data, &plan).unwrap();
        assert_eq!(r.trials.len(), 1);
        assert_eq!(r.best, 0);

        // a depth-0 stump predicts the majority everywhere and is dominated
        let two = SearchSpec {
            mode: SearchMode::Grid,
            domains: domains(&[("max_depth", vec![json!(0), json!(3)])]),
            seed: 0,
        };
        let r = search(&two, &base, &data, &plan).unwrap();
        assert!(r.trials[1].fold_accuracies.iter().zip(&r.trials[0].fold_accuracies).all(|(a, b)| a >= b));
        assert_eq!(r.best, 1);
        match r.best_spec {
            ModelSpec::Tree { params, .. } => assert_eq!(params.max_depth, Some(3)),
            _ => unreachable!(),
        }
    }

    #[test]
    fn unknown_parameter_is_rejected() {
        let (schema, rules) = planted_noisy_rule();
        let data = generate_synthetic(&schema, 50, 1, &rules).unwrap();
        let plan = make_folds(50, 5, true, data.target(), 3).unwrap();
        let spec = SearchSpec { mode: SearchMode::Grid, domains: domains(&[("depth", vec![json!(2)])]), seed: 0 };
        assert!(search(&spec, &ModelSpec::tree(Algorithm::Cart), &data, &plan).is_err());
    }
}
