use serde::{Deserialize, Serialize};

use super::cv::{cross_validate, CvResult};
use super::folds::FoldPlan;
use super::metrics::CoincidenceMatrix;
use super::search::{search, SearchSpec, Trial};
use crate::dataset::CategoricalTable;
use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// One family to compare, optionally tuned on the shared folds first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RosterEntry {
    #[serde(flatten)]
    pub spec: ModelSpec,
    #[serde(default)]
    pub search: Option<SearchSpec>,
}

impl From<ModelSpec> for RosterEntry {
    fn from(spec: ModelSpec) -> Self {
        RosterEntry { spec, search: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub name: String,
    /// Mean of fold accuracies, in percent.
    pub accuracy: f64,
    /// Pooled held-out accuracy, in percent.
    pub pooled_accuracy: f64,
    pub spec: ModelSpec,
    pub fold_accuracies: Vec<f64>,
    pub coincidence: CoincidenceMatrix,
    pub fold_plan_hash: String,
    /// Every tuning trial when the family was searched.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trials: Vec<Trial>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub k: usize,
    pub stratified: bool,
    pub fold_seed: u64,
    pub fold_plan_hash: String,
    /// Sorted by accuracy, highest first, ties by name.
    pub rows: Vec<LeaderboardRow>,
}

impl Leaderboard {
    pub fn render(&self) -> String {
        let mut out = String::from("model\toverall accuracy (%)\n");
        for r in &self.rows {
            out += &format!("{}\t{:.3}\n", r.name, r.accuracy);
        }
        out
    }

    pub fn row(&self, name: &str) -> Option<&LeaderboardRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn evaluate(entry: &RosterEntry, data: &CategoricalTable, plan: &FoldPlan) -> Result<(ModelSpec, CvResult, Vec<Trial>)> {
    match &entry.search {
        None => Ok((entry.spec.clone(), cross_validate(&entry.spec, data, plan)?, Vec::new())),
        Some(s) => {
            let found = search(s, &entry.spec, data, plan)?;
            let cv = cross_validate(&found.best_spec, data, plan)?;
            Ok((found.best_spec, cv, found.trials))
        }
    }
}

/// Cross-validate every roster entry on the same folds.
pub fn compare_models(data: &CategoricalTable, roster: &[RosterEntry], plan: &FoldPlan) -> Result<Leaderboard> {
    if roster.is_empty() {
        return Err(Error::InvalidParams("model roster is empty".into()));
    }
    let hash = plan.hash();
    let mut rows = Vec::with_capacity(roster.len());
    for entry in roster {
        let name = entry.spec.name().to_string();
        log::info!("cross-validating {name}");
        let (spec, cv, trials) = evaluate(entry, data, plan).map_err(|e| Error::Family {
            family: name.clone(),
            source: Box::new(e),
        })?;
        rows.push(LeaderboardRow {
            name,
            accuracy: 100.0 * cv.mean_accuracy,
            pooled_accuracy: 100.0 * cv.pooled_accuracy(),
            spec,
            fold_accuracies: cv.fold_accuracies,
            coincidence: cv.coincidence,
            fold_plan_hash: hash.clone(),
            trials,
        });
    }
    rows.sort_by(|a, b| b.accuracy.total_cmp(&a.accuracy).then_with(|| a.name.cmp(&b.name)));
    Ok(Leaderboard {
        k: plan.k,
        stratified: plan.stratified,
        fold_seed: plan.seed,
        fold_plan_hash: hash,
        rows,
    })
}
