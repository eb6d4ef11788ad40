use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::encode::OneHotEncoder;
use crate::dataset::{CategoricalTable, Code};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the infinity norm of the gradient divided by
    /// the row count.
    pub tolerance: f64,
    /// Ridge penalty on the coefficients (not the intercept).
    pub l2: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        LogisticOptions {
            max_iterations: 100,
            tolerance: 1e-8,
            l2: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub schema_hash: String,
    pub encoder: OneHotEncoder,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub iterations: usize,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LogisticModel {
    pub fn linear_predictor(&self, row: &[Code]) -> f64 {
        self.intercept
            + self
                .encoder
                .encode(row)
                .iter()
                .zip(&self.coefficients)
                .map(|(x, b)| x * b)
                .sum::<f64>()
    }

    pub fn predict_proba(&self, row: &[Code]) -> f64 {
        sigmoid(self.linear_predictor(row))
    }
}

struct Design {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

fn penalized_log_likelihood(d: &Design, theta: &DVector<f64>, l2: f64) -> f64 {
    let eta = &d.x * theta;
    let ll: f64 = eta
        .iter()
        .zip(d.y.iter())
        .map(|(&e, &y)| {
            // log(1 + exp(e)) computed stably
            let softplus = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
            y * e - softplus
        })
        .sum();
    ll - 0.5 * l2 * theta.rows(1, theta.len() - 1).norm_squared()
}

/// Penalized maximum likelihood by Newton-Raphson (iteratively reweighted
/// least squares) with step halving.
pub fn train_logistic(data: &CategoricalTable, options: &LogisticOptions) -> Result<LogisticModel> {
    if !(options.l2 >= 0.0) || !(options.tolerance > 0.0) {
        return Err(Error::InvalidParams("l2 must be >= 0 and tolerance > 0".into()));
    }
    let encoder = OneHotEncoder::from_schema(data.schema());
    let (n, p) = (data.n_rows(), encoder.width() + 1);
    if n < p {
        log::warn!("logistic fit with {n} rows for {p} parameters relies on the ridge penalty");
    }
    let mut x = DMatrix::zeros(n, p);
    for (i, row) in data.rows().iter().enumerate() {
        x[(i, 0)] = 1.0;
        for (j, v) in encoder.encode(row).into_iter().enumerate() {
            x[(i, j + 1)] = v;
        }
    }
    let y = DVector::from_iterator(n, data.target().iter().map(|&t| f64::from(t)));
    let d = Design { x, y };
    let mut penalty = DVector::from_element(p, options.l2);
    penalty[0] = 0.0;

    let mut theta = DVector::zeros(p);
    let mut objective = penalized_log_likelihood(&d, &theta, options.l2);
    let mut gradient_norm = f64::INFINITY;
    for iteration in 0..=options.max_iterations {
        let mu = (&d.x * &theta).map(sigmoid);
        let gradient = d.x.transpose() * (&d.y - &mu) - penalty.component_mul(&theta);
        gradient_norm = gradient.amax() / n.max(1) as f64;
        if gradient_norm < options.tolerance {
            return Ok(LogisticModel {
                schema_hash: data.schema_hash(),
                encoder,
                intercept: theta[0],
                coefficients: theta.rows(1, p - 1).iter().copied().collect(),
                iterations: iteration,
            });
        }
        if iteration == options.max_iterations {
            break;
        }
        let w = mu.map(|m| (m * (1.0 - m)).max(1e-12));
        let mut hessian = d.x.transpose() * DMatrix::from_diagonal(&w) * &d.x;
        for j in 0..p {
            hessian[(j, j)] += penalty[j];
        }
        let step = match hessian.clone().cholesky() {
            Some(c) => c.solve(&gradient),
            None => {
                // rank-deficient design without penalty: nudge the diagonal
                for j in 0..p {
                    hessian[(j, j)] += 1e-8;
                }
                hessian
                    .cholesky()
                    .ok_or(Error::NotConverged { iterations: iteration, gradient_norm })?
                    .solve(&gradient)
            }
        };
        let mut scale = 1.0;
        loop {
            let candidate = &theta + &step * scale;
            let value = penalized_log_likelihood(&d, &candidate, options.l2);
            if value >= objective || scale < 1e-10 {
                theta = candidate;
                objective = value;
                break;
            }
            scale *= 0.5;
        }
    }
    Err(Error::NotConverged {
        iterations: options.max_iterations,
        gradient_norm,
    })
}
