use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::raw::RawTable;
use super::table::CategoricalTable;
use crate::error::{Error, Result};

/// Frequency table of a row variable against a column (target) variable.
///
/// Counts are exact; the percentage accessors return exact fractions times
/// 100 and [`CrosstabReport::render`] rounds them to integers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrosstabReport {
    pub row_variable: String,
    pub column_variable: String,
    pub row_codes: Vec<i64>,
    pub column_codes: Vec<i64>,
    /// `counts[r][c]`
    pub counts: Vec<Vec<u64>>,
}

impl CrosstabReport {
    pub fn from_pairs(
        row_variable: &str,
        column_variable: &str,
        pairs: impl IntoIterator<Item = (i64, i64)>,
    ) -> Self {
        let mut cells: BTreeMap<(i64, i64), u64> = BTreeMap::new();
        for p in pairs {
            *cells.entry(p).or_default() += 1;
        }
        let mut row_codes: Vec<i64> = cells.keys().map(|k| k.0).collect();
        row_codes.dedup();
        let mut column_codes: Vec<i64> = cells.keys().map(|k| k.1).collect();
        column_codes.sort_unstable();
        column_codes.dedup();
        let counts = row_codes
            .iter()
            .map(|&r| {
                column_codes
                    .iter()
                    .map(|&c| cells.get(&(r, c)).copied().unwrap_or(0))
                    .collect()
            })
            .collect();
        CrosstabReport {
            row_variable: row_variable.to_string(),
            column_variable: column_variable.to_string(),
            row_codes,
            column_codes,
            counts,
        }
    }

    pub fn row_total(&self, r: usize) -> u64 {
        self.counts[r].iter().sum()
    }

    pub fn column_total(&self, c: usize) -> u64 {
        self.counts.iter().map(|row| row[c]).sum()
    }

    pub fn grand_total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_percent(&self, r: usize, c: usize) -> f64 {
        pct(self.counts[r][c], self.row_total(r))
    }

    pub fn column_percent(&self, r: usize, c: usize) -> f64 {
        pct(self.counts[r][c], self.column_total(c))
    }

    pub fn cell_percent(&self, r: usize, c: usize) -> f64 {
        pct(self.counts[r][c], self.grand_total())
    }

    /// Plain-text table: count, row %, column % and cell % per column code,
    /// then the row total.
    pub fn render(&self, row_labels: Option<&BTreeMap<i64, String>>) -> String {
        let label = |code: i64| {
            row_labels
                .and_then(|l| l.get(&code).cloned())
                .unwrap_or_else(|| code.to_string())
        };
        let mut out = String::new();
        let _ = write!(out, "{:<28}", format!("{} \\ {}", self.row_variable, self.column_variable));
        for c in &self.column_codes {
            let _ = write!(out, "{:>10}{:>7}{:>7}{:>7}", format!("[{c}] n"), "Row%", "Col%", "Cell%");
        }
        let _ = writeln!(out, "{:>10}", "Total");
        for (r, &code) in self.row_codes.iter().enumerate() {
            let _ = write!(out, "{:<28}", label(code));
            for c in 0..self.column_codes.len() {
                let _ = write!(
                    out,
                    "{:>10}{:>7}{:>7}{:>7}",
                    self.counts[r][c],
                    self.row_percent(r, c).round(),
                    self.column_percent(r, c).round(),
                    self.cell_percent(r, c).round()
                );
            }
            let _ = writeln!(out, "{:>10}", self.row_total(r));
        }
        let _ = write!(out, "{:<28}", "Total");
        for c in 0..self.column_codes.len() {
            let total = self.column_total(c);
            let _ = write!(
                out,
                "{:>10}{:>7}{:>7}{:>7}",
                total,
                pct(total, self.grand_total()).round(),
                100,
                pct(total, self.grand_total()).round()
            );
        }
        let _ = writeln!(out, "{:>10}", self.grand_total());
        out
    }
}

fn pct(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

pub fn crosstab_raw(raw: &RawTable, row_var: &str, column_var: &str) -> Result<CrosstabReport> {
    let rows = raw.column(row_var)?;
    let cols = raw.column(column_var)?;
    Ok(CrosstabReport::from_pairs(row_var, column_var, rows.into_iter().zip(cols)))
}

/// Crosstab of a coded feature against the target.
pub fn crosstab(table: &CategoricalTable, row_var: &str) -> Result<CrosstabReport> {
    let f = table
        .feature_index(row_var)
        .ok_or_else(|| Error::ColumnNotFound(row_var.to_string()))?;
    let pairs = table
        .rows()
        .iter()
        .zip(table.target())
        .map(|(r, &t)| (i64::from(r[f]), i64::from(t)));
    Ok(CrosstabReport::from_pairs(&table.schema()[f].name, "target", pairs))
}
