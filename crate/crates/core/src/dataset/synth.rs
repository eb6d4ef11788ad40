//! Seeded synthetic tables with known generating structure.
//!
//! Features are drawn independently from per-feature categorical marginals;
//! the target comes from a score built out of conjunction terms, either
//! through a logistic link or a hard threshold, followed by optional label
//! noise. Because the generating terms are known, tests can check whether a
//! learner recovers the relevant features.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::table::{CategoricalTable, Code, FeatureSpec};
use crate::error::{Error, Result};

/// `weight` is added to the score when every `(feature, code)` literal holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub when: Vec<(usize, Code)>,
    pub weight: f64,
}

impl Term {
    pub fn new(when: &[(usize, Code)], weight: f64) -> Self {
        Term {
            when: when.to_vec(),
            weight,
        }
    }

    fn holds(&self, row: &[Code]) -> bool {
        self.when.iter().all(|&(f, c)| row[f] == c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TargetModel {
    /// `P(y = 1) = sigmoid(intercept + sum of firing term weights)`.
    Logistic { intercept: f64, terms: Vec<Term> },
    /// `y = 1` iff `intercept + sum of firing term weights > 0`.
    Threshold { intercept: f64, terms: Vec<Term> },
}

impl TargetModel {
    fn score(intercept: f64, terms: &[Term], row: &[Code]) -> f64 {
        intercept + terms.iter().filter(|t| t.holds(row)).map(|t| t.weight).sum::<f64>()
    }

    /// Probability of class 1 before label noise.
    pub fn probability(&self, row: &[Code]) -> f64 {
        match self {
            TargetModel::Logistic { intercept, terms } => {
                1.0 / (1.0 + (-Self::score(*intercept, terms, row)).exp())
            }
            TargetModel::Threshold { intercept, terms } => {
                if Self::score(*intercept, terms, row) > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerativeRules {
    /// Per-feature probabilities over the feature's allowed codes in
    /// ascending code order; `None` means uniform.
    pub marginals: Vec<Option<Vec<f64>>>,
    pub target: TargetModel,
    /// Probability of flipping each generated label.
    pub label_noise: f64,
}

impl GenerativeRules {
    pub fn uniform(n_features: usize, target: TargetModel) -> Self {
        GenerativeRules {
            marginals: vec![None; n_features],
            target,
            label_noise: 0.0,
        }
    }

    pub fn with_noise(mut self, label_noise: f64) -> Self {
        self.label_noise = label_noise;
        self
    }

    pub fn with_marginal(mut self, feature: usize, probs: Vec<f64>) -> Self {
        self.marginals[feature] = Some(probs);
        self
    }

    /// Default rules over [`crash_schema`]: a logistic model led by damage,
    /// pre-impact location, first harmful event and a winter effect, with a
    /// class-1 rate close to 394/740.
    pub fn crash_default() -> Self {
        let f = |name: &str| {
            crash_schema()
                .iter()
                .position(|s| s.name == name)
                .expect("known crash feature")
        };
        let (damage, location, harmful, month) = (
            f("extent_of_damage"),
            f("pre_impact_location"),
            f("first_harmful_event"),
            f("month_of_crash"),
        );
        let (surface, trafficway, grade, critical) = (
            f("surface_condition"),
            f("trafficway"),
            f("grade"),
            f("critical_event"),
        );
        let target = TargetModel::Logistic {
            intercept: CRASH_INTERCEPT,
            terms: vec![
                Term::new(&[(damage, 1)], 1.6),
                Term::new(&[(location, 1)], 0.9),
                Term::new(&[(harmful, 1)], 0.9),
                Term::new(&[(month, 1)], -0.5),
                Term::new(&[(surface, 1)], 0.3),
                Term::new(&[(trafficway, 1)], 0.3),
                Term::new(&[(grade, 1)], -0.25),
                Term::new(&[(critical, 2)], 0.2),
                Term::new(&[(damage, 1), (month, 1), (surface, 0)], -0.6),
            ],
        };
        GenerativeRules::uniform(crash_schema().len(), target)
            .with_marginal(damage, vec![0.6, 0.4])
            .with_marginal(harmful, vec![0.65, 0.35])
            .with_marginal(month, vec![0.75, 0.25])
    }
}

const CRASH_INTERCEPT: f64 = -1.33;

/// Binary features `f0..f{n-1}`.
pub fn binary_schema(n: usize) -> Vec<FeatureSpec> {
    (0..n).map(|i| FeatureSpec::new(format!("f{i}"), [0, 1])).collect()
}

/// Ten binary features where only `f2` and `f6` drive the target: the class-1
/// probability is 0.9 when either is set and 0.1 otherwise.
pub fn planted_relevance() -> (Vec<FeatureSpec>, GenerativeRules, [usize; 2]) {
    let target = TargetModel::Logistic {
        intercept: -2.2,
        terms: vec![Term::new(&[(2, 1)], 4.4), Term::new(&[(6, 1)], 4.4)],
    };
    (binary_schema(10), GenerativeRules::uniform(10, target), [2, 6])
}

/// `f0 XOR f1` with 10% label noise plus eight noise features. `f1` is
/// skewed (30% ones) so `f0` carries a marginal signal while `f1` carries
/// none; a main-effects model cannot represent the interaction.
pub fn planted_interaction() -> (Vec<FeatureSpec>, GenerativeRules) {
    let target = TargetModel::Threshold {
        intercept: -0.5,
        terms: vec![Term::new(&[(0, 1), (1, 0)], 1.0), Term::new(&[(0, 0), (1, 1)], 1.0)],
    };
    let rules = GenerativeRules::uniform(10, target)
        .with_marginal(1, vec![0.7, 0.3])
        .with_noise(0.1);
    (binary_schema(10), rules)
}

/// Six ternary features `t0..t5`; the label is 1 when `t0 = 2`, or when
/// `t1 = 0` and `t2 != 1`, flipped with 10% probability.
pub fn planted_noisy_rule() -> (Vec<FeatureSpec>, GenerativeRules) {
    let schema: Vec<FeatureSpec> = (0..6).map(|i| FeatureSpec::new(format!("t{i}"), 0..3)).collect();
    let target = TargetModel::Threshold {
        intercept: -0.5,
        terms: vec![
            Term::new(&[(0, 2)], 1.0),
            Term::new(&[(1, 0), (2, 0)], 1.0),
            Term::new(&[(1, 0), (2, 2)], 1.0),
            Term::new(&[(0, 2), (1, 0), (2, 0)], -1.0),
            Term::new(&[(0, 2), (1, 0), (2, 2)], -1.0),
        ],
    };
    (schema, GenerativeRules::uniform(6, target).with_noise(0.1))
}

/// The predictors of the curve-crash study after recoding.
pub fn crash_schema() -> Vec<FeatureSpec> {
    let yes_no = [(0, "no"), (1, "yes")];
    vec![
        FeatureSpec::labeled("urban_rural", &[(1, "urban"), (2, "rural")]),
        FeatureSpec::labeled("motor_vehicles", &[(0, "1"), (1, ">1")]),
        FeatureSpec::labeled("occupants", &[(0, "1"), (1, ">1")]),
        FeatureSpec::labeled(
            "first_harmful_event",
            &[(0, "other events"), (1, "collision with motor vehicle in transport")],
        ),
        FeatureSpec::labeled("vehicle_model_year", &[(0, "<2010"), (1, ">=2010")]),
        FeatureSpec::labeled("initial_contact", &[(0, "other areas"), (1, "front")]),
        FeatureSpec::labeled(
            "extent_of_damage",
            &[(0, "not disabling damage"), (1, "disabling damage")],
        ),
        FeatureSpec::labeled(
            "most_harmful_event",
            &[(0, "other events"), (1, "collision with motor vehicle in transport")],
        ),
        FeatureSpec::labeled("speeding_related", &yes_no),
        FeatureSpec::labeled("driver_error", &[(0, "no error"), (1, "error")]),
        FeatureSpec::labeled(
            "trafficway",
            &[(0, "divided two-way and others"), (1, "not divided two-way")],
        ),
        FeatureSpec::labeled("speed_limit", &[(0, "<46"), (1, ">=46")]),
        FeatureSpec::labeled(
            "roadway_alignment",
            &[(1, "curve right"), (2, "curve left"), (3, "curve - unknown direction")],
        ),
        FeatureSpec::labeled("grade", &[(0, "not level"), (1, "level")]),
        FeatureSpec::labeled("surface_condition", &[(0, "not dry"), (1, "dry")]),
        FeatureSpec::labeled("traffic_control", &yes_no),
        FeatureSpec::labeled(
            "critical_event",
            &[(1, "the vehicle itself"), (2, "other vehicles"), (3, "others")],
        ),
        FeatureSpec::labeled("avoidance_maneuver", &[(0, "no action"), (1, "braking"), (2, "others")]),
        FeatureSpec::labeled("pre_impact_stability", &[(0, "no tracking"), (1, "tracking")]),
        FeatureSpec::labeled(
            "pre_impact_location",
            &[(0, "not departed roadway"), (1, "departed roadway")],
        ),
        FeatureSpec::labeled("crash_type", &[(0, "others"), (1, "single driver")]),
        FeatureSpec::labeled("month_of_crash", &[(0, "not winter"), (1, "winter")]),
    ]
}

fn draw_code(rng: &mut ChaCha8Rng, codes: &[Code], probs: Option<&[f64]>) -> Code {
    match probs {
        None => codes[rng.random_range(0..codes.len())],
        Some(p) => {
            let total: f64 = p.iter().sum();
            let mut u = rng.random::<f64>() * total;
            for (&c, &w) in codes.iter().zip(p) {
                if u < w {
                    return c;
                }
                u -= w;
            }
            *codes.last().expect("non-empty codes")
        }
    }
}

/// Draw `n` rows from `rules` over `schema`; identical inputs give identical
/// tables.
pub fn generate_synthetic(
    schema: &[FeatureSpec],
    n: usize,
    seed: u64,
    rules: &GenerativeRules,
) -> Result<CategoricalTable> {
    if n == 0 {
        return Err(Error::InvalidParams("n must be at least 1".into()));
    }
    if rules.marginals.len() != schema.len() {
        return Err(Error::InvalidParams(format!(
            "{} marginals for {} features",
            rules.marginals.len(),
            schema.len()
        )));
    }
    let codes: Vec<Vec<Code>> = schema.iter().map(|f| f.allowed_codes.iter().copied().collect()).collect();
    for (i, m) in rules.marginals.iter().enumerate() {
        if let Some(p) = m {
            if p.len() != codes[i].len() || p.iter().any(|&w| !(w >= 0.0)) || p.iter().sum::<f64>() <= 0.0 {
                return Err(Error::InvalidParams(format!(
                    "marginal for {} must have {} non-negative weights",
                    schema[i].name,
                    codes[i].len()
                )));
            }
        }
    }
    let terms = match &rules.target {
        TargetModel::Logistic { terms, .. } | TargetModel::Threshold { terms, .. } => terms,
    };
    for t in terms {
        for &(f, c) in &t.when {
            if f >= schema.len() || !schema[f].allowed_codes.contains(&c) {
                return Err(Error::InvalidParams(format!("term literal ({f}, {c}) outside schema")));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut target = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<Code> = codes
            .iter()
            .zip(&rules.marginals)
            .map(|(c, m)| draw_code(&mut rng, c, m.as_deref()))
            .collect();
        let p = rules.target.probability(&row);
        let mut y = u8::from(rng.random::<f64>() < p);
        if rules.label_noise > 0.0 && rng.random::<f64>() < rules.label_noise {
            y ^= 1;
        }
        rows.push(row);
        target.push(y);
    }
    CategoricalTable::new(schema.to_vec(), rows, target)
}
