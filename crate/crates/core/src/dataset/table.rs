use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A recoded category value.
pub type Code = u32;

/// Coding of one categorical predictor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub allowed_codes: BTreeSet<Code>,
    /// Raw source values meaning "not reported" or "unknown".
    #[serde(default)]
    pub missing_codes: BTreeSet<i64>,
    #[serde(default)]
    pub code_labels: BTreeMap<Code, String>,
}

impl FeatureSpec {
    /// A feature whose labels are the code numbers themselves.
    pub fn new(name: impl Into<String>, codes: impl IntoIterator<Item = Code>) -> Self {
        let allowed_codes: BTreeSet<Code> = codes.into_iter().collect();
        let code_labels = allowed_codes.iter().map(|&c| (c, c.to_string())).collect();
        FeatureSpec {
            name: name.into(),
            allowed_codes,
            missing_codes: BTreeSet::new(),
            code_labels,
        }
    }

    pub fn labeled(name: impl Into<String>, labels: &[(Code, &str)]) -> Self {
        FeatureSpec {
            name: name.into(),
            allowed_codes: labels.iter().map(|&(c, _)| c).collect(),
            missing_codes: BTreeSet::new(),
            code_labels: labels.iter().map(|&(c, l)| (c, l.to_string())).collect(),
        }
    }

    pub fn with_missing(mut self, missing: impl IntoIterator<Item = i64>) -> Self {
        self.missing_codes = missing.into_iter().collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.allowed_codes.is_empty() {
            return Err(Error::InvalidSchema(format!("{}: no allowed codes", self.name)));
        }
        if let Some(c) = self
            .allowed_codes
            .iter()
            .find(|&&c| self.missing_codes.contains(&i64::from(c)))
        {
            return Err(Error::InvalidSchema(format!(
                "{}: code {c} is both allowed and missing",
                self.name
            )));
        }
        if let Some(c) = self.allowed_codes.iter().find(|c| !self.code_labels.contains_key(c)) {
            return Err(Error::InvalidSchema(format!("{}: code {c} has no label", self.name)));
        }
        Ok(())
    }

    pub fn label(&self, code: Code) -> String {
        self.code_labels
            .get(&code)
            .cloned()
            .unwrap_or_else(|| code.to_string())
    }
}

/// Stable digest of a schema, recorded in serialized models.
pub fn schema_hash(schema: &[FeatureSpec]) -> String {
    let mut h = Sha256::new();
    for f in schema {
        h.update(f.name.as_bytes());
        h.update([0]);
        for c in &f.allowed_codes {
            h.update(c.to_le_bytes());
        }
        h.update([0xff]);
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Coded categorical predictors plus a binary target. Immutable once built.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalTable {
    schema: Vec<FeatureSpec>,
    rows: Vec<Vec<Code>>,
    target: Vec<u8>,
}

impl CategoricalTable {
    pub fn new(schema: Vec<FeatureSpec>, rows: Vec<Vec<Code>>, target: Vec<u8>) -> Result<Self> {
        for f in &schema {
            f.validate()?;
        }
        let mut names = BTreeSet::new();
        for f in &schema {
            if !names.insert(f.name.to_ascii_lowercase()) {
                return Err(Error::InvalidSchema(format!("duplicate feature {}", f.name)));
            }
        }
        if rows.is_empty() {
            return Err(Error::InvalidTable("table has no rows".into()));
        }
        if rows.len() != target.len() {
            return Err(Error::InvalidTable(format!(
                "{} rows but {} target values",
                rows.len(),
                target.len()
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != schema.len() {
                return Err(Error::InvalidTable(format!(
                    "row {i} has {} cells, schema has {} features",
                    row.len(),
                    schema.len()
                )));
            }
            for (code, spec) in row.iter().zip(&schema) {
                if !spec.allowed_codes.contains(code) {
                    return Err(Error::InvalidTable(format!(
                        "row {i}: code {code} not allowed for {}",
                        spec.name
                    )));
                }
            }
        }
        if let Some(i) = target.iter().position(|&t| t > 1) {
            return Err(Error::InvalidTable(format!("row {i}: target must be 0 or 1")));
        }
        Ok(CategoricalTable {
            schema,
            rows,
            target,
        })
    }

    pub fn schema(&self) -> &[FeatureSpec] {
        &self.schema
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.schema.iter().map(|f| f.name.clone()).collect()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub fn rows(&self) -> &[Vec<Code>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[Code] {
        &self.rows[i]
    }

    pub fn target(&self) -> &[u8] {
        &self.target
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.schema
            .iter()
            .position(|f| f.name.eq_ignore_ascii_case(name))
    }

    pub fn positives(&self) -> usize {
        self.target.iter().filter(|&&t| t == 1).count()
    }

    /// Rows at `indices`, in that order (repeats allowed).
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let rows = indices.iter().map(|&i| self.rows[i].clone()).collect();
        let target = indices.iter().map(|&i| self.target[i]).collect();
        CategoricalTable::new(self.schema.clone(), rows, target)
    }

    /// Keep only the listed feature columns, in the listed order.
    pub fn project(&self, features: &[usize]) -> Result<Self> {
        if let Some(&f) = features.iter().find(|&&f| f >= self.n_features()) {
            return Err(Error::InvalidParams(format!("feature index {f} out of range")));
        }
        let schema = features.iter().map(|&f| self.schema[f].clone()).collect();
        let rows = self
            .rows
            .iter()
            .map(|r| features.iter().map(|&f| r[f]).collect())
            .collect();
        CategoricalTable::new(schema, rows, self.target.clone())
    }

    pub fn project_names(&self, names: &[String]) -> Result<Self> {
        let idx = names
            .iter()
            .map(|n| self.feature_index(n).ok_or_else(|| Error::ColumnNotFound(n.clone())))
            .collect::<Result<Vec<_>>>()?;
        self.project(&idx)
    }

    pub fn schema_hash(&self) -> String {
        schema_hash(&self.schema)
    }

    /// Write as delimited text: one column per feature then `target`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = self.feature_names();
        header.push("target".into());
        w.write_record(&header)?;
        for (row, t) in self.rows.iter().zip(&self.target) {
            let mut rec: Vec<String> = row.iter().map(Code::to_string).collect();
            rec.push(t.to_string());
            w.write_record(&rec)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Serialization(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Serialization(e.to_string()))
    }

    /// Read text produced by [`CategoricalTable::to_csv`] against a schema.
    pub fn from_csv(text: &str, schema: Vec<FeatureSpec>) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut positions = Vec::with_capacity(schema.len());
        for f in &schema {
            let p = header
                .iter()
                .position(|h| h.eq_ignore_ascii_case(&f.name))
                .ok_or_else(|| Error::ColumnNotFound(f.name.clone()))?;
            positions.push(p);
        }
        let tpos = header
            .iter()
            .position(|h| h.eq_ignore_ascii_case("target"))
            .ok_or_else(|| Error::ColumnNotFound("target".into()))?;
        let mut rows = Vec::new();
        let mut target = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse = |p: usize| -> Result<u32> {
                let v = rec.get(p).unwrap_or("").trim();
                v.parse().map_err(|_| Error::Parse {
                    row: i + 1,
                    column: header[p].clone(),
                    value: v.to_string(),
                })
            };
            rows.push(positions.iter().map(|&p| parse(p)).collect::<Result<Vec<_>>>()?);
            target.push(parse(tpos)? as u8);
        }
        CategoricalTable::new(schema, rows, target)
    }
}
