use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uncoded integer records as read from a flat-file extract.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTable {
    columns: Vec<String>,
    rows: Vec<Vec<i64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DelimitedOptions {
    pub delimiter: u8,
    pub has_header: bool,
}

impl Default for DelimitedOptions {
    fn default() -> Self {
        DelimitedOptions {
            delimiter: b',',
            has_header: true,
        }
    }
}

impl DelimitedOptions {
    pub fn tab() -> Self {
        DelimitedOptions {
            delimiter: b'\t',
            ..Self::default()
        }
    }
}

impl RawTable {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<i64>>) -> Result<Self> {
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != columns.len()) {
            return Err(Error::InvalidTable(format!(
                "row {i} has {} cells, expected {}",
                r.len(),
                columns.len()
            )));
        }
        Ok(RawTable { columns, rows })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<i64>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::ColumnNotFound(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<Vec<i64>> {
        let j = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[j]).collect())
    }

    /// Comma-separated text with a header row.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(i64::to_string))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Serialization(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Serialization(e.to_string()))
    }

    /// Keep the rows for which `keep` returns true, preserving order.
    pub fn retain_rows(&self, mut keep: impl FnMut(&[i64]) -> bool) -> RawTable {
        RawTable {
            columns: self.columns.clone(),
            rows: self.rows.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }
}

/// Read the named columns (matched case-insensitively) from delimited text.
/// Columns not listed are ignored; output columns follow `columns` order.
pub fn parse_delimited(text: &str, columns: &[String], options: DelimitedOptions) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(options.has_header)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = if options.has_header {
        reader.headers()?.iter().map(str::to_string).collect()
    } else {
        // headerless files are positional
        columns.to_vec()
    };
    let positions = columns
        .iter()
        .map(|c| {
            header
                .iter()
                .position(|h| h.eq_ignore_ascii_case(c))
                .ok_or_else(|| Error::ColumnNotFound(c.clone()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = positions
            .iter()
            .zip(columns)
            .map(|(&p, name)| {
                let cell = rec.get(p).unwrap_or("");
                cell.parse::<i64>().map_err(|_| Error::Parse {
                    row: i + 1,
                    column: name.clone(),
                    value: cell.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    RawTable::new(columns.to_vec(), rows)
}

pub fn load_delimited(path: &Path, columns: &[String], options: DelimitedOptions) -> Result<RawTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_delimited(&text, columns, options)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cols(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn reads_requested_columns_in_order() {
        let text = "A,grade,C\n1,2,3\n4,5,6\n7,8,9\n";
        let t = parse_delimited(text, &cols(&["C", "GRADE"]), DelimitedOptions::default()).unwrap();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.rows()[0], vec![3, 2]);
        assert_eq!(t.columns(), &cols(&["C", "GRADE"]));
    }

    #[test]
    fn missing_column_is_named() {
        let err = parse_delimited("A,B\n1,2\n", &cols(&["GRADE"]), DelimitedOptions::default())
            .unwrap_err();
        assert_eq!(err.to_string(), "column not found: GRADE");
    }

    #[test]
    fn non_integer_cell_reports_position() {
        let err = parse_delimited("A,B\n1,2\n3,NA\n", &cols(&["A", "B"]), DelimitedOptions::default())
            .unwrap_err();
        match err {
            Error::Parse { row, column, value } => {
                assert_eq!((row, column.as_str(), value.as_str()), (2, "B", "NA"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn tab_delimited() {
        let t = parse_delimited("A\tB\n1\t2\n", &cols(&["B"]), DelimitedOptions::tab()).unwrap();
        assert_eq!(t.rows(), &[vec![2]]);
    }

    #[test]
    fn unreadable_file() {
        let err = load_delimited(Path::new("/nonexistent/x.csv"), &[], DelimitedOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
