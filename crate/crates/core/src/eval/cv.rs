use serde::{Deserialize, Serialize};

use super::folds::FoldPlan;
use super::metrics::{coincidence, CoincidenceMatrix};
use crate::dataset::CategoricalTable;
use crate::error::{Error, Result};
use crate::model::{Classifier, ModelSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub fold_accuracies: Vec<f64>,
    /// Unweighted mean of the fold accuracies.
    pub mean_accuracy: f64,
    /// Held-out prediction for every row, by row index.
    pub predictions: Vec<u8>,
    pub coincidence: CoincidenceMatrix,
}

impl CvResult {
    /// Accuracy over all held-out predictions pooled together.
    pub fn pooled_accuracy(&self) -> f64 {
        self.coincidence.correct() as f64 / self.coincidence.total() as f64
    }
}

/// Cross-validate any trainer: `fit` is called once per fold on the training
/// complement and its model predicts the held-out rows.
pub fn cross_validate_with<C, F>(data: &CategoricalTable, plan: &FoldPlan, mut fit: F) -> Result<CvResult>
where
    C: Classifier,
    F: FnMut(&CategoricalTable) -> Result<C>,
{
    if plan.n_rows() != data.n_rows() {
        return Err(Error::InvalidParams(format!(
            "fold plan covers {} rows, table has {}",
            plan.n_rows(),
            data.n_rows()
        )));
    }
    let mut predictions = vec![0u8; data.n_rows()];
    let mut fold_accuracies = Vec::with_capacity(plan.k);
    for (f, held) in plan.folds.iter().enumerate() {
        let wrap = |e| Error::Fold { fold: f, source: Box::new(e) };
        let train = data.subset(&plan.train_indices(f))?;
        let model = fit(&train).map_err(wrap)?;
        let mut correct = 0;
        for &i in held {
            let p = model.predict(data.row(i)).map_err(wrap)?;
            predictions[i] = p;
            correct += usize::from(p == data.target()[i]);
        }
        fold_accuracies.push(correct as f64 / held.len() as f64);
    }
    let mean_accuracy = fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64;
    let coincidence = coincidence(data.target(), &predictions)?;
    Ok(CvResult { fold_accuracies, mean_accuracy, predictions, coincidence })
}

pub fn cross_validate(spec: &ModelSpec, data: &CategoricalTable, plan: &FoldPlan) -> Result<CvResult> {
    cross_validate_with(data, plan, |train| spec.fit(train))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{binary_schema, generate_synthetic, GenerativeRules, TargetModel, Term};
    use crate::eval::make_folds;
    use crate::tree::Algorithm;

    fn table(intercept: f64, n: usize) -> CategoricalTable {
        let target = TargetModel::Threshold { intercept, terms: vec![Term::new(&[(0, 1)], 1.0)] };
        generate_synthetic(&binary_schema(3), n, 4, &GenerativeRules::uniform(3, target)).unwrap()
    }

    #[test]
    fn majority_scores_majority_rate() {
        let target = TargetModel::Logistic { intercept: 0.8, terms: vec![] };
        let data = generate_synthetic(&binary_schema(2), 200, 3, &GenerativeRules::uniform(2, target)).unwrap();
        let plan = make_folds(200, 10, true, data.target(), 1).unwrap();
        let cv = cross_validate(&ModelSpec::Majority, &data, &plan).unwrap();
        let rate = data.positives().max(200 - data.positives()) as f64 / 200.0;
        assert!((cv.mean_accuracy - rate).abs() < 0.02);
        assert_eq!(cv.coincidence.total(), 200);
    }

    #[test]
    fn separable_c50_is_perfect() {
        let data = table(-0.5, 100);
        let plan = make_folds(100, 10, true, data.target(), 2).unwrap();
        let cv = cross_validate(&ModelSpec::tree(Algorithm::C50), &data, &plan).unwrap();
        assert_eq!(cv.mean_accuracy, 1.0);
        assert_eq!(cv.predictions, data.target());
        assert!((cv.pooled_accuracy() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fold_errors_name_the_fold() {
        let data = table(-0.5, 40);
        let plan = make_folds(40, 4, false, data.target(), 2).unwrap();
        let mut calls = 0;
        let err = cross_validate_with(&data, &plan, |train| {
            calls += 1;
            if calls == 3 {
                Err(Error::InvalidParams("boom".into()))
            } else {
                ModelSpec::Majority.fit(train)
            }
        })
        .unwrap_err();
        assert!(matches!(err, Error::Fold { fold: 2, .. }));
        let short = make_folds(30, 3, false, &[], 0).unwrap();
        assert!(cross_validate(&ModelSpec::Majority, &data, &short).is_err());
    }
}
