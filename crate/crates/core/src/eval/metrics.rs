use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-class confusion counts: rows are the true class, columns the
/// predicted class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoincidenceMatrix {
    pub counts: [[u64; 2]; 2],
}

impl CoincidenceMatrix {
    pub fn new(counts: [[u64; 2]; 2]) -> Self {
        CoincidenceMatrix { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        self.counts[0][0] + self.counts[1][1]
    }

    /// Percent of true class `r` predicted correctly; `None` for an empty row.
    pub fn row_percent(&self, r: usize) -> Option<f64> {
        let n = self.counts[r][0] + self.counts[r][1];
        (n > 0).then(|| 100.0 * self.counts[r][r] as f64 / n as f64)
    }

    /// Row percentages rounded to whole numbers.
    pub fn rounded_row_percents(&self) -> [Option<u64>; 2] {
        [0, 1].map(|r| self.row_percent(r).map(|p| p.round() as u64))
    }

    pub fn render(&self) -> String {
        let pct = self.rounded_row_percents().map(|p| p.map_or("-".to_string(), |v| v.to_string()));
        let mut out = String::from("observed\tpredicted 0\tpredicted 1\tpercent correct\n");
        for r in 0..2 {
            out += &format!("{r}\t{}\t{}\t{}\n", self.counts[r][0], self.counts[r][1], pct[r]);
        }
        out
    }
}

pub fn coincidence(truth: &[u8], predicted: &[u8]) -> Result<CoincidenceMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::InvalidParams(format!(
            "{} truth labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut m = CoincidenceMatrix::default();
    for (&t, &p) in truth.iter().zip(predicted) {
        if t > 1 || p > 1 {
            return Err(Error::InvalidParams(format!("labels must be 0 or 1, got ({t}, {p})")));
        }
        m.counts[t as usize][p as usize] += 1;
    }
    Ok(m)
}

/// Percent of all cases on the diagonal.
pub fn overall_accuracy(matrix: &CoincidenceMatrix) -> Result<f64> {
    match matrix.total() {
        0 => Err(Error::EmptyCounts),
        n => Ok(100.0 * matrix.correct() as f64 / n as f64),
    }
}
