use serde::{Deserialize, Serialize};

use super::raw::RawTable;
use crate::error::Result;

/// Predicates selecting vehicles that were negotiating a curve.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurveCohort {
    pub alignment_field: String,
    /// Raw alignment codes for curve right, curve left and curve of unknown
    /// direction.
    pub curve_codes: Vec<i64>,
    pub negotiating_field: String,
    pub negotiating_codes: Vec<i64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortCounts {
    pub retained: usize,
    pub discarded: usize,
}

pub fn filter_curve_cohort(raw: &RawTable, cohort: &CurveCohort) -> Result<(RawTable, CohortCounts)> {
    let align = raw.column_index(&cohort.alignment_field)?;
    let moving = raw.column_index(&cohort.negotiating_field)?;
    let kept = raw.retain_rows(|r| {
        cohort.curve_codes.contains(&r[align]) && cohort.negotiating_codes.contains(&r[moving])
    });
    let counts = CohortCounts {
        retained: kept.n_rows(),
        discarded: raw.n_rows() - kept.n_rows(),
    };
    if counts.retained == 0 {
        log::warn!(
            "curve cohort is empty: no row has {} in {:?} and {} in {:?}",
            cohort.alignment_field,
            cohort.curve_codes,
            cohort.negotiating_field,
            cohort.negotiating_codes
        );
    }
    Ok((kept, counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn cohort() -> CurveCohort {
        CurveCohort {
            alignment_field: "VALIGN".into(),
            curve_codes: vec![2, 3, 4],
            negotiating_field: "P_CRASH1".into(),
            negotiating_codes: vec![6],
        }
    }

    #[test]
    fn straight_rows_are_excluded() {
        let raw = RawTable::new(
            vec!["VALIGN".into(), "P_CRASH1".into()],
            vec![vec![1, 6], vec![2, 6], vec![3, 1], vec![4, 6]],
        )
        .unwrap();
        let (kept, counts) = filter_curve_cohort(&raw, &cohort()).unwrap();
        assert_eq!(kept.rows(), &[vec![2, 6], vec![4, 6]]);
        assert_eq!(counts, CohortCounts { retained: 2, discarded: 2 });
    }

    #[test]
    fn empty_result_is_not_an_error() {
        let raw = RawTable::new(vec!["VALIGN".into(), "P_CRASH1".into()], vec![vec![1, 6]]).unwrap();
        let (kept, counts) = filter_curve_cohort(&raw, &cohort()).unwrap();
        assert_eq!(kept.n_rows(), 0);
        assert_eq!(counts.discarded, 1);
    }

    #[test]
    fn missing_field() {
        let raw = RawTable::new(vec!["VALIGN".into()], vec![vec![1]]).unwrap();
        assert!(matches!(filter_curve_cohort(&raw, &cohort()), Err(Error::ColumnNotFound(_))));
    }
}
