//! Declarative raw-code to category recoding.
//!
//! A rule set is written as TOML:
//!
//! ```toml
//! [target]
//! name = "injury"
//! source = "MAX_VSEV"
//! missing = [9]
//! rules = [
//!   { when = { eq = 0 }, code = 0 },
//!   { when = { between = [1, 4] }, code = 1 },
//! ]
//!
//! [[feature]]
//! name = "speed_limit"
//! source = "VSPD_LIM"
//! missing = [98, 99]
//! labels = { 0 = "<46", 1 = ">=46" }
//! rules = [
//!   { when = { lt = 46 }, code = 0 },
//!   { when = { ge = 46 }, code = 1 },
//! ]
//! ```
//!
//! Rules are tried in order and the first match wins. A raw value that is
//! neither matched nor listed as missing is an error unless the feature sets
//! `otherwise = "drop"` or `otherwise = { code = N }`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::raw::RawTable;
use super::table::{CategoricalTable, Code, FeatureSpec};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    Eq(i64),
    In(Vec<i64>),
    Lt(i64),
    Le(i64),
    Gt(i64),
    Ge(i64),
    /// Inclusive on both ends.
    Between([i64; 2]),
    Any(bool),
}

impl Predicate {
    pub fn matches(&self, v: i64) -> bool {
        match self {
            Predicate::Eq(x) => v == *x,
            Predicate::In(xs) => xs.contains(&v),
            Predicate::Lt(x) => v < *x,
            Predicate::Le(x) => v <= *x,
            Predicate::Gt(x) => v > *x,
            Predicate::Ge(x) => v >= *x,
            Predicate::Between([lo, hi]) => (*lo..=*hi).contains(&v),
            Predicate::Any(b) => *b,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub when: Predicate,
    /// Source field tested; defaults to the feature's first source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub code: Code,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum DefaultAction {
    #[default]
    Error,
    Drop,
    Assign(Code),
}

#[derive(Deserialize, Serialize)]
#[serde(untagged)]
enum DefaultRepr {
    Word(String),
    Assign { code: Code },
}

impl Serialize for DefaultAction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            DefaultAction::Error => DefaultRepr::Word("error".into()),
            DefaultAction::Drop => DefaultRepr::Word("drop".into()),
            DefaultAction::Assign(code) => DefaultRepr::Assign { code: *code },
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DefaultAction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match DefaultRepr::deserialize(d)? {
            DefaultRepr::Word(w) if w == "error" => Ok(DefaultAction::Error),
            DefaultRepr::Word(w) if w == "drop" => Ok(DefaultAction::Drop),
            DefaultRepr::Word(w) => Err(serde::de::Error::custom(format!(
                "unknown default action {w:?} (expected \"error\", \"drop\" or {{ code = N }})"
            ))),
            DefaultRepr::Assign { code } => Ok(DefaultAction::Assign(code)),
        }
    }
}

/// Recoding of one output column.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureRule {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sources: Vec<String>,
    #[serde(default)]
    pub missing: BTreeSet<i64>,
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
    pub rules: Vec<Rule>,
    #[serde(default)]
    pub otherwise: DefaultAction,
}

impl FeatureRule {
    pub fn source_fields(&self) -> Vec<String> {
        let mut out: Vec<String> = self.source.iter().cloned().collect();
        for s in &self.sources {
            if !out.iter().any(|o| o.eq_ignore_ascii_case(s)) {
                out.push(s.clone());
            }
        }
        for r in &self.rules {
            if let Some(f) = &r.field {
                if !out.iter().any(|o| o.eq_ignore_ascii_case(f)) {
                    out.push(f.clone());
                }
            }
        }
        out
    }

    pub fn spec(&self) -> Result<FeatureSpec> {
        let mut allowed: BTreeSet<Code> = self.rules.iter().map(|r| r.code).collect();
        if let DefaultAction::Assign(c) = self.otherwise {
            allowed.insert(c);
        }
        let mut code_labels = BTreeMap::new();
        for (k, v) in &self.labels {
            let code: Code = k.trim().parse().map_err(|_| {
                Error::InvalidSchema(format!("{}: label key {k:?} is not a code", self.name))
            })?;
            code_labels.insert(code, v.clone());
        }
        for c in &allowed {
            code_labels.entry(*c).or_insert_with(|| c.to_string());
        }
        let spec = FeatureSpec {
            name: self.name.clone(),
            allowed_codes: allowed,
            missing_codes: self.missing.clone(),
            code_labels,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn apply(&self, row: &[i64], positions: &[(String, usize)]) -> Result<Outcome> {
        let default_field = &positions[0];
        for rule in &self.rules {
            let (_, pos) = match &rule.field {
                Some(f) => positions
                    .iter()
                    .find(|(name, _)| name.eq_ignore_ascii_case(f))
                    .expect("rule fields are resolved up front"),
                None => default_field,
            };
            if rule.when.matches(row[*pos]) {
                return Ok(Outcome::Code(rule.code));
            }
        }
        match self.otherwise {
            DefaultAction::Assign(c) => Ok(Outcome::Code(c)),
            DefaultAction::Drop => Ok(Outcome::Drop),
            DefaultAction::Error => Err(Error::UncoveredCode {
                feature: self.name.clone(),
                field: default_field.0.clone(),
                value: row[default_field.1],
            }),
        }
    }
}

enum Outcome {
    Code(Code),
    Drop,
}

/// Target rule plus one rule per predictor, in output column order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecodeRuleSet {
    pub target: FeatureRule,
    #[serde(rename = "feature")]
    pub features: Vec<FeatureRule>,
}

/// Row accounting for one recode run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecodeAudit {
    pub input_rows: usize,
    pub retained_rows: usize,
    /// Rows dropped for a missing raw value, attributed to the first output
    /// column (target first) whose source was missing.
    pub dropped_missing: BTreeMap<String, usize>,
    /// Rows dropped by an `otherwise = "drop"` default.
    pub dropped_by_default: BTreeMap<String, usize>,
}

impl RecodeAudit {
    pub fn dropped(&self) -> usize {
        self.input_rows - self.retained_rows
    }
}

impl RecodeRuleSet {
    pub fn from_toml(text: &str) -> Result<Self> {
        let set: RecodeRuleSet =
            toml::from_str(text).map_err(|e| Error::Config(format!("recode rules: {e}")))?;
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        for r in std::iter::once(&self.target).chain(&self.features) {
            if r.source_fields().is_empty() {
                return Err(Error::Config(format!("{}: no source field", r.name)));
            }
            r.spec()?;
        }
        let t = self.target.spec()?;
        if !t.allowed_codes.iter().all(|&c| c <= 1) {
            return Err(Error::Config("target codes must be 0 or 1".into()));
        }
        Ok(())
    }

    /// Every raw column the rules read.
    pub fn source_fields(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in std::iter::once(&self.target).chain(&self.features) {
            for s in r.source_fields() {
                if !out.iter().any(|o| o.eq_ignore_ascii_case(&s)) {
                    out.push(s);
                }
            }
        }
        out
    }

    pub fn schema(&self) -> Result<Vec<FeatureSpec>> {
        self.features.iter().map(FeatureRule::spec).collect()
    }

    /// Rules mapping every allowed code of `schema` to itself; the raw column
    /// names equal the feature names and the target column is `target`.
    pub fn identity(schema: &[FeatureSpec]) -> Self {
        let rule_for = |spec: &FeatureSpec| FeatureRule {
            name: spec.name.clone(),
            source: Some(spec.name.clone()),
            sources: vec![],
            missing: spec.missing_codes.clone(),
            labels: spec
                .code_labels
                .iter()
                .map(|(c, l)| (c.to_string(), l.clone()))
                .collect(),
            rules: spec
                .allowed_codes
                .iter()
                .map(|&c| Rule {
                    when: Predicate::Eq(i64::from(c)),
                    field: None,
                    code: c,
                })
                .collect(),
            otherwise: DefaultAction::Error,
        };
        RecodeRuleSet {
            target: rule_for(&FeatureSpec::new("target", [0, 1])),
            features: schema.iter().map(rule_for).collect(),
        }
    }
}

/// Inverse view of a coded table as raw integers (feature columns, then
/// `target`). Used to feed coded data back through [`recode`].
pub fn coded_as_raw(table: &CategoricalTable) -> RawTable {
    let mut columns = table.feature_names();
    columns.push("target".into());
    let rows = table
        .rows()
        .iter()
        .zip(table.target())
        .map(|(r, &t)| {
            r.iter()
                .map(|&c| i64::from(c))
                .chain(std::iter::once(i64::from(t)))
                .collect()
        })
        .collect();
    RawTable::new(columns, rows).expect("rectangular by construction")
}

/// Apply `rules` to every raw row.
///
/// In strict mode a row with a missing value in any source field is dropped
/// and counted; otherwise a missing value is an error.
pub fn recode(
    raw: &RawTable,
    rules: &RecodeRuleSet,
    strict: bool,
) -> Result<(CategoricalTable, RecodeAudit)> {
    rules.validate()?;
    let resolve = |r: &FeatureRule| -> Result<Vec<(String, usize)>> {
        r.source_fields()
            .into_iter()
            .map(|f| raw.column_index(&f).map(|i| (f, i)))
            .collect()
    };
    let all: Vec<&FeatureRule> = std::iter::once(&rules.target).chain(&rules.features).collect();
    let positions = all.iter().map(|r| resolve(r)).collect::<Result<Vec<_>>>()?;
    let schema = rules.schema()?;

    let mut audit = RecodeAudit {
        input_rows: raw.n_rows(),
        ..Default::default()
    };
    let mut rows = Vec::new();
    let mut target = Vec::new();
    'rows: for (i, row) in raw.rows().iter().enumerate() {
        for (rule, pos) in all.iter().zip(&positions) {
            if let Some((field, p)) = pos.iter().find(|(_, p)| rule.missing.contains(&row[*p])) {
                if strict {
                    *audit.dropped_missing.entry(rule.name.clone()).or_default() += 1;
                    continue 'rows;
                }
                return Err(Error::MissingValue {
                    field: field.clone(),
                    row: i + 1,
                    value: row[*p],
                });
            }
        }
        let mut coded = Vec::with_capacity(all.len());
        for (rule, pos) in all.iter().zip(&positions) {
            match rule.apply(row, pos)? {
                Outcome::Code(c) => coded.push(c),
                Outcome::Drop => {
                    *audit.dropped_by_default.entry(rule.name.clone()).or_default() += 1;
                    continue 'rows;
                }
            }
        }
        target.push(coded[0] as u8);
        rows.push(coded[1..].to_vec());
    }
    audit.retained_rows = rows.len();
    let table = CategoricalTable::new(schema, rows, target)?;
    Ok((table, audit))
}
