use serde::{Deserialize, Serialize};

use crate::dataset::{CategoricalTable, Code};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Structure {
    /// Target is the sole parent of every feature.
    Naive,
    /// Hill-climb over single edge additions starting from the naive graph.
    GreedySearch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BayesNetOptions {
    pub structure: Structure,
    /// Additive smoothing for conditional probability tables.
    pub smoothing: f64,
    pub max_parents: usize,
}

impl Default for BayesNetOptions {
    fn default() -> Self {
        BayesNetOptions {
            structure: Structure::Naive,
            smoothing: 1.0,
            max_parents: 3,
        }
    }
}

/// Variables are the features in schema order followed by the target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BayesNetModel {
    pub schema_hash: String,
    pub names: Vec<String>,
    /// Ordered domain of every variable.
    pub domains: Vec<Vec<Code>>,
    pub parents: Vec<Vec<usize>>,
    /// Per variable, one distribution over its domain for every parent
    /// configuration (mixed radix over the parents, first parent slowest).
    pub cpts: Vec<Vec<Vec<f64>>>,
    /// Training class-1 rate, returned for rows with codes outside the domains.
    pub class_rate: f64,
}

fn config_count(domains: &[Vec<Code>], parents: &[usize]) -> usize {
    parents.iter().map(|&p| domains[p].len()).product()
}

fn level(domain: &[Code], code: Code) -> Option<usize> {
    domain.binary_search(&code).ok()
}

/// Levels of every variable per row (target last).
fn encode_rows(data: &CategoricalTable, domains: &[Vec<Code>]) -> Vec<Vec<usize>> {
    data.rows()
        .iter()
        .zip(data.target())
        .map(|(row, &y)| {
            row.iter()
                .chain(std::iter::once(&Code::from(y)))
                .zip(domains)
                .map(|(&c, d)| level(d, c).expect("row conforms to schema"))
                .collect()
        })
        .collect()
}

fn config_index(levels: &[usize], domains: &[Vec<Code>], parents: &[usize]) -> usize {
    parents.iter().fold(0, |acc, &p| acc * domains[p].len() + levels[p])
}

fn family_counts(rows: &[Vec<usize>], domains: &[Vec<Code>], var: usize, parents: &[usize]) -> Vec<Vec<f64>> {
    let mut counts = vec![vec![0.0; domains[var].len()]; config_count(domains, parents)];
    for r in rows {
        counts[config_index(r, domains, parents)][r[var]] += 1.0;
    }
    counts
}

/// Log-likelihood of one family at its maximum-likelihood parameters minus
/// half `ln n` per free parameter.
fn family_score(rows: &[Vec<usize>], domains: &[Vec<Code>], var: usize, parents: &[usize]) -> f64 {
    let counts = family_counts(rows, domains, var, parents);
    let ll: f64 = counts
        .iter()
        .map(|row| {
            let total: f64 = row.iter().sum();
            row.iter().filter(|&&c| c > 0.0).map(|&c| c * (c / total).ln()).sum::<f64>()
        })
        .sum();
    let free = (domains[var].len() - 1) * counts.len();
    ll - 0.5 * (rows.len() as f64).ln() * free as f64
}

fn reaches(parents: &[Vec<usize>], from: usize, to: usize) -> bool {
    // is there a directed path from -> ... -> to, following child links
    let mut stack = vec![to];
    let mut seen = vec![false; parents.len()];
    while let Some(v) = stack.pop() {
        if v == from {
            return true;
        }
        if !std::mem::replace(&mut seen[v], true) {
            stack.extend(&parents[v]);
        }
    }
    false
}

pub fn train_bayes_net(data: &CategoricalTable, options: &BayesNetOptions) -> Result<BayesNetModel> {
    if !(options.smoothing >= 0.0) || !options.smoothing.is_finite() {
        return Err(Error::InvalidParams("smoothing must be a finite value >= 0".into()));
    }
    let m = data.n_features();
    let mut domains: Vec<Vec<Code>> = data.schema().iter().map(|f| f.allowed_codes.iter().copied().collect()).collect();
    domains.push(vec![0, 1]);
    let mut names = data.feature_names();
    names.push("target".into());
    let rows = encode_rows(data, &domains);

    let mut parents: Vec<Vec<usize>> = (0..m).map(|_| vec![m]).collect();
    parents.push(Vec::new());
    if options.structure == Structure::GreedySearch && !rows.is_empty() {
        let mut scores: Vec<f64> = (0..=m).map(|v| family_score(&rows, &domains, v, &parents[v])).collect();
        loop {
            let mut best: Option<(f64, usize, usize, f64)> = None;
            for child in 0..=m {
                if parents[child].len() >= options.max_parents {
                    continue;
                }
                for parent in 0..=m {
                    if parent == child || parents[child].contains(&parent) || reaches(&parents, child, parent) {
                        continue;
                    }
                    let mut candidate = parents[child].clone();
                    candidate.push(parent);
                    candidate.sort_unstable();
                    let s = family_score(&rows, &domains, child, &candidate);
                    let gain = s - scores[child];
                    if gain > 1e-9 && best.is_none_or(|b| gain > b.0) {
                        best = Some((gain, child, parent, s));
                    }
                }
            }
            let Some((_, child, parent, s)) = best else { break };
            parents[child].push(parent);
            parents[child].sort_unstable();
            scores[child] = s;
        }
    }

    let alpha = options.smoothing;
    let cpts = (0..=m)
        .map(|v| {
            family_counts(&rows, &domains, v, &parents[v])
                .into_iter()
                .map(|row| {
                    let total: f64 = row.iter().sum::<f64>() + alpha * row.len() as f64;
                    if total > 0.0 {
                        row.iter().map(|c| (c + alpha) / total).collect()
                    } else {
                        vec![1.0 / row.len() as f64; row.len()]
                    }
                })
                .collect()
        })
        .collect();
    Ok(BayesNetModel {
        schema_hash: data.schema_hash(),
        names,
        domains,
        parents,
        cpts,
        class_rate: if data.n_rows() == 0 { 0.5 } else { data.positives() as f64 / data.n_rows() as f64 },
    })
}

impl BayesNetModel {
    pub fn n_variables(&self) -> usize {
        self.domains.len()
    }

    /// Joint probability of a full assignment given as domain levels, target last.
    pub fn joint_levels(&self, levels: &[usize]) -> f64 {
        (0..self.n_variables())
            .map(|v| self.cpts[v][config_index(levels, &self.domains, &self.parents[v])][levels[v]])
            .product()
    }

    /// Probability of class 1 given the features.
    pub fn predict_proba(&self, row: &[Code]) -> f64 {
        let Some(mut levels) = row
            .iter()
            .zip(&self.domains)
            .map(|(&c, d)| level(d, c))
            .collect::<Option<Vec<usize>>>()
        else {
            return self.class_rate;
        };
        levels.push(0);
        let p0 = self.joint_levels(&levels);
        *levels.last_mut().expect("target level") = 1;
        let p1 = self.joint_levels(&levels);
        if p0 + p1 > 0.0 {
            p1 / (p0 + p1)
        } else {
            0.5
        }
    }

    /// Penalized log-likelihood of `data` under this graph.
    pub fn structure_score(&self, data: &CategoricalTable) -> f64 {
        let rows = encode_rows(data, &self.domains);
        (0..self.n_variables())
            .map(|v| family_score(&rows, &self.domains, v, &self.parents[v]))
            .sum()
    }

    pub fn is_acyclic(&self) -> bool {
        (0..self.n_variables()).all(|v| self.parents[v].iter().all(|&p| !reaches(&self.parents, v, p)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{binary_schema, generate_synthetic, FeatureSpec, GenerativeRules, TargetModel, Term};

    fn table(schema: Vec<FeatureSpec>, rows: &[(&[Code], u8)]) -> CategoricalTable {
        CategoricalTable::new(schema, rows.iter().map(|r| r.0.to_vec()).collect(), rows.iter().map(|r| r.1).collect())
            .unwrap()
    }

    /// Sum of the joint over every assignment.
    fn total_mass(model: &BayesNetModel) -> f64 {
        let sizes: Vec<usize> = model.domains.iter().map(Vec::len).collect();
        let mut levels = vec![0; sizes.len()];
        let mut total = 0.0;
        loop {
            total += model.joint_levels(&levels);
            let mut k = 0;
            while k < sizes.len() {
                levels[k] += 1;
                if levels[k] < sizes[k] {
                    break;
                }
                levels[k] = 0;
                k += 1;
            }
            if k == sizes.len() {
                return total;
            }
        }
    }

    #[test]
    fn naive_posterior_odds_by_hand() {
        // y=1: x=1 three times, x=0 once; y=0: x=1 once, x=0 three times
        let rows: Vec<(&[Code], u8)> = vec![
            (&[1], 1), (&[1], 1), (&[1], 1), (&[0], 1),
            (&[1], 0), (&[0], 0), (&[0], 0), (&[0], 0), (&[0], 0), (&[0], 0),
        ];
        let data = table(binary_schema(1), &rows);
        let model = train_bayes_net(&data, &BayesNetOptions::default()).unwrap();
        // smoothed: prior 5/12 vs 7/12, P(x=1|1) = 4/6, P(x=1|0) = 2/8
        let odds = (5.0 / 7.0) * ((4.0 / 6.0) / (2.0 / 8.0));
        let p = model.predict_proba(&[1]);
        assert!((p / (1.0 - p) - odds).abs() < 1e-12);
        let q = model.predict_proba(&[0]);
        assert!((q / (1.0 - q) - (5.0 / 7.0) * ((2.0 / 6.0) / (6.0 / 8.0))).abs() < 1e-12);
    }

    #[test]
    fn joint_sums_to_one() {
        let target = TargetModel::Logistic { intercept: 0.0, terms: vec![Term::new(&[(0, 1)], 2.0)] };
        let schema = vec![FeatureSpec::new("a", 0..3), FeatureSpec::new("b", 0..2), FeatureSpec::new("c", [1, 4, 7])];
        let data = generate_synthetic(&schema, 200, 2, &GenerativeRules::uniform(3, target)).unwrap();
        for structure in [Structure::Naive, Structure::GreedySearch] {
            for smoothing in [0.0, 0.5, 1.0] {
                let model = train_bayes_net(&data, &BayesNetOptions { structure, smoothing, ..Default::default() }).unwrap();
                assert!(model.is_acyclic());
                for cpt in &model.cpts {
                    for row in cpt {
                        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    }
                }
                assert!((total_mass(&model) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn heavy_smoothing_is_uniform() {
        let target = TargetModel::Logistic { intercept: 1.0, terms: vec![Term::new(&[(0, 1)], 2.0)] };
        let data = generate_synthetic(&binary_schema(2), 100, 3, &GenerativeRules::uniform(2, target)).unwrap();
        let model = train_bayes_net(&data, &BayesNetOptions { smoothing: 1e12, ..Default::default() }).unwrap();
        for cpt in &model.cpts {
            for row in cpt {
                for &p in row {
                    assert!((p - 1.0 / row.len() as f64).abs() < 1e-9);
                }
            }
        }
        assert!((model.predict_proba(&[1, 0]) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn greedy_search_beats_naive_on_chain() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let flip = |rng: &mut rand_chacha::ChaCha8Rng, v: u32| if rng.random::<f64>() < 0.1 { 1 - v } else { v };
        let mut rows = Vec::new();
        let mut target = Vec::new();
        for _ in 0..500 {
            let a = rng.random_range(0..2);
            let b = flip(&mut rng, a);
            target.push(flip(&mut rng, b) as u8);
            rows.push(vec![a, b]);
        }
        let data = CategoricalTable::new(binary_schema(2), rows, target).unwrap();
        let naive = train_bayes_net(&data, &BayesNetOptions::default()).unwrap();
        let greedy =
            train_bayes_net(&data, &BayesNetOptions { structure: Structure::GreedySearch, ..Default::default() }).unwrap();
        assert!(greedy.structure_score(&data) >= naive.structure_score(&data));
        assert!(greedy.is_acyclic());
        // the a - b dependence is not explained by the target alone
        assert!(greedy.parents[0].contains(&1) || greedy.parents[1].contains(&0));
    }

    #[test]
    fn deterministic() {
        let target = TargetModel::Logistic { intercept: 0.0, terms: vec![Term::new(&[(1, 1)], 1.0)] };
        let data = generate_synthetic(&binary_schema(3), 150, 4, &GenerativeRules::uniform(3, target)).unwrap();
        let opts = BayesNetOptions { structure: Structure::GreedySearch, ..Default::default() };
        assert_eq!(train_bayes_net(&data, &opts).unwrap(), train_bayes_net(&data, &opts).unwrap());
    }
}
