use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encode::OneHotEncoder;
use crate::dataset::{CategoricalTable, Code};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpOptions {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for MlpOptions {
    fn default() -> Self {
        MlpOptions {
            hidden: vec![16; 5],
            learning_rate: 0.005,
            epochs: 100,
            batch_size: 32,
            patience: 10,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

/// Feed-forward network with tanh hidden layers and a logistic output unit.
/// Parameters are stored flat, layer by layer: the weight matrix (row-major,
/// `out x in`) followed by the bias vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub schema_hash: String,
    pub encoder: OneHotEncoder,
    /// Layer widths from input to the single output.
    pub layers: Vec<usize>,
    pub activation: String,
    pub params: Vec<f64>,
    pub epochs_run: usize,
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

impl MlpModel {
    fn offsets(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut at = 0;
        for w in self.layers.windows(2) {
            let (i, o) = (w[0], w[1]);
            out.push((at, at + o * i));
            at += o * i + o;
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.layers.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    /// Activations of every layer, input first; the last holds the output
    /// probability.
    fn forward(&self, params: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        let last = self.layers.len() - 2;
        for (l, (w_at, b_at)) in self.offsets().into_iter().enumerate() {
            let (fan_in, fan_out) = (self.layers[l], self.layers[l + 1]);
            let input = &acts[l];
            let out: Vec<f64> = (0..fan_out)
                .map(|o| {
                    let z = params[b_at + o]
                        + (0..fan_in).map(|i| params[w_at + o * fan_in + i] * input[i]).sum::<f64>();
                    if l == last {
                        sigmoid(z)
                    } else {
                        z.tanh()
                    }
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    fn output(&self, params: &[f64], x: &[f64]) -> f64 {
        self.forward(params, x).last().expect("output layer")[0]
    }

    pub fn predict_proba(&self, row: &[Code]) -> f64 {
        self.output(&self.params, &self.encoder.encode(row))
    }

    /// Mean binary cross-entropy over `(x, y)` pairs.
    pub fn loss(&self, params: &[f64], xs: &[Vec<f64>], ys: &[f64]) -> f64 {
        let total: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, &y)| {
                let p = self.output(params, x).clamp(1e-15, 1.0 - 1e-15);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum();
        total / xs.len() as f64
    }

    /// Mean cross-entropy and its gradient with respect to `params`.
    pub fn loss_and_gradient(&self, params: &[f64], xs: &[Vec<f64>], ys: &[f64]) -> (f64, Vec<f64>) {
        let offsets = self.offsets();
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        let n_layers = offsets.len();
        for (x, &y) in xs.iter().zip(ys) {
            let acts = self.forward(params, x);
            let p = acts[n_layers][0];
            let pc = p.clamp(1e-15, 1.0 - 1e-15);
            loss -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
            // d loss / d z at the output of a sigmoid + cross-entropy pair
            let mut delta = vec![p - y];
            for l in (0..n_layers).rev() {
                let (w_at, b_at) = offsets[l];
                let (fan_in, fan_out) = (self.layers[l], self.layers[l + 1]);
                let input = &acts[l];
                for o in 0..fan_out {
                    grad[b_at + o] += delta[o];
                    for i in 0..fan_in {
                        grad[w_at + o * fan_in + i] += delta[o] * input[i];
                    }
                }
                if l > 0 {
                    delta = (0..fan_in)
                        .map(|i| {
                            let back: f64 = (0..fan_out).map(|o| params[w_at + o * fan_in + i] * delta[o]).sum();
                            back * (1.0 - input[i] * input[i])
                        })
                        .collect();
                }
            }
        }
        let n = xs.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        (loss / n, grad)
    }
}

/// Mini-batch Adam on cross-entropy with early stopping on a seeded
/// validation split; the best validation weights are kept.
pub fn train_mlp(data: &CategoricalTable, options: &MlpOptions) -> Result<MlpModel> {
    if options.hidden.contains(&0) || options.batch_size == 0 {
        return Err(Error::InvalidParams("layer widths and batch size must be positive".into()));
    }
    if !(0.0..1.0).contains(&options.validation_fraction) || !(options.learning_rate > 0.0) {
        return Err(Error::InvalidParams("validation_fraction in [0, 1) and learning_rate > 0 required".into()));
    }
    let encoder = OneHotEncoder::from_schema(data.schema());
    let mut layers = vec![encoder.width()];
    layers.extend(&options.hidden);
    layers.push(1);
    let mut model = MlpModel {
        schema_hash: data.schema_hash(),
        encoder,
        layers,
        activation: "tanh".into(),
        params: Vec::new(),
        epochs_run: 0,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut params = Vec::with_capacity(model.n_params());
    for w in model.layers.windows(2) {
        let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
        params.extend((0..w[0] * w[1]).map(|_| rng.random_range(-limit..limit)));
        params.extend(std::iter::repeat_n(0.0, w[1]));
    }

    let xs: Vec<Vec<f64>> = data.rows().iter().map(|r| model.encoder.encode(r)).collect();
    let ys: Vec<f64> = data.target().iter().map(|&t| f64::from(t)).collect();
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.shuffle(&mut rng);
    let n_val = (xs.len() as f64 * options.validation_fraction).floor() as usize;
    let (val_idx, train_idx) = order.split_at(n_val);
    let gather = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<f64>) {
        (idx.iter().map(|&i| xs[i].clone()).collect(), idx.iter().map(|&i| ys[i]).collect())
    };
    let (train_x, train_y) = gather(train_idx);
    let (val_x, val_y) = if n_val > 0 { gather(val_idx) } else { (train_x.clone(), train_y.clone()) };

    let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut m = vec![0.0; params.len()];
    let mut v = vec![0.0; params.len()];
    let mut t = 0i32;
    let mut best = (model.loss(&params, &val_x, &val_y), params.clone());
    let mut stale = 0;
    let mut batch_order: Vec<usize> = (0..train_x.len()).collect();
    for epoch in 0..options.epochs {
        batch_order.shuffle(&mut rng);
        for chunk in batch_order.chunks(options.batch_size) {
            let bx: Vec<Vec<f64>> = chunk.iter().map(|&i| train_x[i].clone()).collect();
            let by: Vec<f64> = chunk.iter().map(|&i| train_y[i]).collect();
            let (loss, grad) = model.loss_and_gradient(&params, &bx, &by);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
            t += 1;
            let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
            for k in 0..params.len() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * grad[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * grad[k] * grad[k];
                params[k] -= options.learning_rate * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
            }
        }
        model.epochs_run = epoch + 1;
        let val = model.loss(&params, &val_x, &val_y);
        if !val.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        if val < best.0 - 1e-9 {
            best = (val, params.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= options.patience {
                break;
            }
        }
    }
    model.params = best.1;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{binary_schema, generate_synthetic, GenerativeRules, TargetModel, Term};

    fn small_model(seed: u64) -> (MlpModel, Vec<Vec<f64>>, Vec<f64>) {
        let target = TargetModel::Logistic { intercept: 0.0, terms: vec![Term::new(&[(0, 1)], 1.0)] };
        let data = generate_synthetic(&binary_schema(3), 20, seed, &GenerativeRules::uniform(3, target)).unwrap();
        let opts = MlpOptions { hidden: vec![4; 5], epochs: 0, seed, ..MlpOptions::default() };
        let model = train_mlp(&data, &opts).unwrap();
        let xs = data.rows().iter().map(|r| model.encoder.encode(r)).collect();
        let ys = data.target().iter().map(|&t| f64::from(t)).collect();
        (model, xs, ys)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (model, xs, ys) = small_model(3);
        let (_, grad) = model.loss_and_gradient(&model.params, &xs, &ys);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let eps = 1e-5;
        for _ in 0..5 {
            let k = rng.random_range(0..model.params.len());
            let mut plus = model.params.clone();
            plus[k] += eps;
            let mut minus = model.params.clone();
            minus[k] -= eps;
            let numeric = (model.loss(&plus, &xs, &ys) - model.loss(&minus, &xs, &ys)) / (2.0 * eps);
            let rel = (numeric - grad[k]).abs() / numeric.abs().max(grad[k].abs()).max(1e-8);
            assert!(rel < 1e-4, "param {k}: analytic {} numeric {numeric}", grad[k]);
        }
    }

    #[test]
    fn zero_epochs_keep_initial_output() {
        let (model, xs, _) = small_model(4);
        assert_eq!(model.epochs_run, 0);
        assert_eq!(model.layers, vec![3, 4, 4, 4, 4, 4, 1]);
        let outs: Vec<f64> = xs.iter().map(|x| model.output(&model.params, x)).collect();
        // zero biases and small weights keep the output near one half
        assert!(outs.iter().all(|p| (p - 0.5).abs() < 0.25));
    }

    #[test]
    fn learns_separable_data() {
        let target = TargetModel::Threshold {
            intercept: -0.5,
            terms: vec![Term::new(&[(0, 1)], 1.0), Term::new(&[(1, 1)], -2.0)],
        };
        let data = generate_synthetic(&binary_schema(2), 300, 5, &GenerativeRules::uniform(2, target)).unwrap();
        let model = train_mlp(&data, &MlpOptions { seed: 1, ..MlpOptions::default() }).unwrap();
        let correct = data
            .rows()
            .iter()
            .zip(data.target())
            .filter(|(r, &y)| u8::from(model.predict_proba(r) >= 0.5) == y)
            .count();
        assert!(correct as f64 / data.n_rows() as f64 >= 0.95);
    }

    #[test]
    fn deterministic_for_seed() {
        let (a, _, _) = small_model(6);
        let (b, _, _) = small_model(6);
        assert_eq!(a, b);
    }

    #[test]
    fn huge_learning_rate_is_contained_or_reported() {
        let target = TargetModel::Logistic { intercept: 0.0, terms: vec![Term::new(&[(0, 1)], 1.0)] };
        let data = generate_synthetic(&binary_schema(2), 50, 1, &GenerativeRules::uniform(2, target)).unwrap();
        match train_mlp(&data, &MlpOptions { learning_rate: 1e6, epochs: 5, ..MlpOptions::default() }) {
            Ok(m) => assert!(m.params.iter().all(|p| p.is_finite())),
            Err(e) => assert!(matches!(e, Error::Diverged { .. })),
        }
    }
}
