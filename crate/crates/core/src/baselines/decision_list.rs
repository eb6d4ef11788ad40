use serde::{Deserialize, Serialize};

use crate::dataset::{CategoricalTable, Code};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecisionListOptions {
    /// Fewest training rows a rule must cover.
    pub min_coverage: usize,
    /// Lowest Laplace precision a rule may have.
    pub min_precision: f64,
    pub max_literals: usize,
}

impl Default for DecisionListOptions {
    fn default() -> Self {
        DecisionListOptions {
            min_coverage: 5,
            min_precision: 0.6,
            max_literals: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    /// Conjunction of `feature == code` tests.
    pub literals: Vec<(usize, Code)>,
    pub class: u8,
    /// Laplace-corrected precision of `class` on the rows the rule took.
    pub precision: f64,
    pub coverage: usize,
}

impl Rule {
    pub fn matches(&self, row: &[Code]) -> bool {
        self.literals.iter().all(|&(f, c)| row[f] == c)
    }

    fn probability(&self) -> f64 {
        if self.class == 1 {
            self.precision
        } else {
            1.0 - self.precision
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionListModel {
    pub schema_hash: String,
    pub rules: Vec<Rule>,
    /// Unconditional last rule.
    pub default: Rule,
}

fn laplace(hits: usize, n: usize) -> f64 {
    (hits as f64 + 1.0) / (n as f64 + 2.0)
}

/// Majority class (ties to 1), its Laplace precision, and coverage.
fn score(data: &CategoricalTable, rows: &[usize]) -> (u8, f64) {
    let pos = rows.iter().filter(|&&i| data.target()[i] == 1).count();
    let class = u8::from(2 * pos >= rows.len());
    let hits = if class == 1 { pos } else { rows.len() - pos };
    (class, laplace(hits, rows.len()))
}

/// Grow one rule literal by literal and return the best prefix meeting the
/// thresholds.
fn grow_rule(data: &CategoricalTable, remaining: &[usize], options: &DecisionListOptions) -> Option<Rule> {
    let mut literals: Vec<(usize, Code)> = Vec::new();
    let mut covered = remaining.to_vec();
    let mut best: Option<Rule> = None;
    while literals.len() < options.max_literals {
        let mut step: Option<((usize, Code), Vec<usize>, u8, f64)> = None;
        for (f, spec) in data.schema().iter().enumerate() {
            if literals.iter().any(|&(g, _)| g == f) {
                continue;
            }
            for &code in &spec.allowed_codes {
                let rows: Vec<usize> = covered.iter().copied().filter(|&i| data.row(i)[f] == code).collect();
                if rows.is_empty() || rows.len() == covered.len() {
                    continue;
                }
                let (class, precision) = score(data, &rows);
                let better = match &step {
                    None => true,
                    Some((_, r, _, p)) => precision > p + 1e-12 || ((precision - p).abs() <= 1e-12 && rows.len() > r.len()),
                };
                if better {
                    step = Some(((f, code), rows, class, precision));
                }
            }
        }
        let Some((literal, rows, class, precision)) = step else { break };
        literals.push(literal);
        covered = rows;
        let rule = Rule { literals: literals.clone(), class, precision, coverage: covered.len() };
        if rule.coverage >= options.min_coverage && rule.precision >= options.min_precision {
            let improves = best.as_ref().is_none_or(|b| {
                rule.precision > b.precision + 1e-12
                    || ((rule.precision - b.precision).abs() <= 1e-12 && rule.coverage > b.coverage)
            });
            if improves {
                best = Some(rule);
            }
        }
        if covered.iter().all(|&i| data.target()[i] == class) {
            break;
        }
    }
    best
}

/// Sequential covering: learn a rule, drop the rows it covers, repeat until
/// no rule qualifies or the remaining rows are pure.
pub fn train_decision_list(data: &CategoricalTable, options: &DecisionListOptions) -> Result<DecisionListModel> {
    if options.max_literals == 0 || !(0.0..=1.0).contains(&options.min_precision) {
        return Err(Error::InvalidParams("max_literals >= 1 and min_precision in [0, 1] required".into()));
    }
    let mut remaining: Vec<usize> = (0..data.n_rows()).collect();
    let mut rules = Vec::new();
    loop {
        let pure = remaining.iter().all(|&i| data.target()[i] == data.target()[remaining[0]]);
        if remaining.is_empty() || pure {
            break;
        }
        let Some(rule) = grow_rule(data, &remaining, options) else { break };
        remaining.retain(|&i| !rule.matches(data.row(i)));
        rules.push(rule);
    }
    let pool: Vec<usize> = if remaining.is_empty() { (0..data.n_rows()).collect() } else { remaining };
    let (class, precision) = score(data, &pool);
    Ok(DecisionListModel {
        schema_hash: data.schema_hash(),
        rules,
        default: Rule { literals: Vec::new(), class, precision, coverage: pool.len() },
    })
}

impl DecisionListModel {
    pub fn first_match(&self, row: &[Code]) -> &Rule {
        self.rules.iter().find(|r| r.matches(row)).unwrap_or(&self.default)
    }

    pub fn predict_proba(&self, row: &[Code]) -> f64 {
        self.first_match(row).probability()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{binary_schema, generate_synthetic, FeatureSpec, GenerativeRules, TargetModel, Term};

    /// `y = (a = 1 and b = 1) or c = 2` over ternary features plus distractors.
    pub(crate) fn two_rule_data(n: usize, seed: u64) -> CategoricalTable {
        let schema: Vec<FeatureSpec> = (0..5).map(|i| FeatureSpec::new(format!("t{i}"), 0..3)).collect();
        let target = TargetModel::Threshold {
            intercept: -0.5,
            terms: vec![Term::new(&[(0, 1), (1, 1)], 1.0), Term::new(&[(2, 2)], 1.0)],
        };
        generate_synthetic(&schema, n, seed, &GenerativeRules::uniform(5, target)).unwrap()
    }

    #[test]
    fn pure_feature_gives_one_rule() {
        let target = TargetModel::Threshold { intercept: -0.5, terms: vec![Term::new(&[(0, 1)], 1.0)] };
        let data = generate_synthetic(&binary_schema(3), 100, 1, &GenerativeRules::uniform(3, target)).unwrap();
        let model = train_decision_list(&data, &DecisionListOptions::default()).unwrap();
        assert_eq!(model.rules.len(), 1);
        let correct = data
            .rows()
            .iter()
            .zip(data.target())
            .filter(|(r, &y)| u8::from(model.predict_proba(r) >= 0.5) == y)
            .count();
        assert_eq!(correct, data.n_rows());
    }

    #[test]
    fn rules_cover_disjoint_rows() {
        let data = two_rule_data(400, 3);
        let model = train_decision_list(&data, &DecisionListOptions::default()).unwrap();
        let mut taken = vec![false; data.n_rows()];
        for rule in &model.rules {
            let mut count = 0;
            for (i, row) in data.rows().iter().enumerate() {
                if !taken[i] && rule.matches(row) {
                    taken[i] = true;
                    count += 1;
                }
            }
            assert_eq!(count, rule.coverage);
        }
    }

    #[test]
    fn recovers_planted_rules() {
        let holdout = two_rule_data(2000, 1000);
        let planted = [vec![(0usize, 1 as Code), (1, 1)], vec![(2, 2)]];
        let mut recovered = 0;
        for seed in 0..20 {
            let model = train_decision_list(&two_rule_data(300, seed), &DecisionListOptions::default()).unwrap();
            let ok = planted.iter().all(|lits| {
                holdout
                    .rows()
                    .iter()
                    .filter(|r| lits.iter().all(|&(f, c)| r[f] == c))
                    .all(|r| model.predict_proba(r) >= 0.5)
            });
            recovered += usize::from(ok);
        }
        assert!(recovered >= 18, "{recovered}/20");
    }

    #[test]
    fn prediction_ignores_later_rules() {
        let data = two_rule_data(400, 5);
        let model = train_decision_list(&data, &DecisionListOptions::default()).unwrap();
        assert!(model.rules.len() >= 2);
        let mut edited = model.clone();
        for rule in edited.rules.iter_mut().skip(1) {
            rule.class = 1 - rule.class;
            rule.precision = 0.123;
        }
        edited.default.class = 1 - edited.default.class;
        for row in data.rows().iter().filter(|r| model.rules[0].matches(r)) {
            assert_eq!(model.predict_proba(row), edited.predict_proba(row));
        }
    }

    #[test]
    fn probability_follows_rule_class() {
        let data = two_rule_data(300, 7);
        let model = train_decision_list(&data, &DecisionListOptions::default()).unwrap();
        for row in data.rows() {
            let rule = model.first_match(row);
            let p = model.predict_proba(row);
            assert_eq!(u8::from(p >= 0.5), rule.class);
        }
    }
}
