use std::collections::HashMap;

use super::PosteriorModel;
use crate::data::Dataset;
use crate::decision::Belief;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
enum Encoding {
    OneHot { offset: usize, cardinality: usize },
    Scaled { offset: usize, repr: Vec<f64>, mean: f64, scale: f64 },
}

/// Multinomial logistic regression (softmax link; the binary case is plain
/// logistic regression) trained by full-batch gradient descent from zero
/// weights.
///
/// Categorical columns are one-hot encoded; numeric columns enter through
/// their standardized bin representative. Training aggregates rows into
/// distinct cells first, so an epoch costs `O(cells × features)`.
#[derive(Debug, Clone)]
pub struct GlmModel {
    encodings: Vec<Encoding>,
    n_features: usize,
    /// `weights[state][feature]`; feature 0 is the intercept.
    weights: Vec<Vec<f64>>,
    epochs: usize,
    learning_rate: f64,
    seed: u64,
}

impl GlmModel {
    pub fn fit(
        ds: &Dataset,
        cols: &[usize],
        rows: &[usize],
        epochs: usize,
        learning_rate: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::Domain(format!("learning rate must be positive, got {learning_rate}")));
        }
        let k = ds.num_states();
        let mut cells: HashMap<Vec<u32>, Vec<f64>> = HashMap::new();
        let mut total = 0.0;
        for &row in rows {
            let w = ds.weight(row);
            if w == 0.0 {
                continue;
            }
            cells.entry(ds.cell(row, cols)).or_insert_with(|| vec![0.0; k])[ds.state(row)] += w;
            total += w;
        }

        let mut encodings = Vec::with_capacity(cols.len());
        let mut offset = 1;
        for (j, &c) in cols.iter().enumerate() {
            let column = ds.column(c);
            if column.is_numeric() {
                let repr = column.representatives().to_vec();
                if repr.iter().any(|r| !r.is_finite()) {
                    return Err(Error::Numeric(format!(
                        "column {:?} has non-finite feature values",
                        column.name()
                    )));
                }
                let (mut sum, mut sq) = (0.0, 0.0);
                for (cell, counts) in &cells {
                    let w: f64 = counts.iter().sum();
                    let x = repr[cell[j] as usize];
                    sum += w * x;
                    sq += w * x * x;
                }
                let mean = if total > 0.0 { sum / total } else { 0.0 };
                let var = if total > 0.0 { (sq / total - mean * mean).max(0.0) } else { 0.0 };
                let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
                encodings.push(Encoding::Scaled { offset, repr, mean, scale });
                offset += 1;
            } else {
                encodings.push(Encoding::OneHot { offset, cardinality: column.cardinality() });
                offset += column.cardinality();
            }
        }
        let n_features = offset;
        let mut model = Self {
            encodings,
            n_features,
            weights: vec![vec![0.0; n_features]; k],
            epochs,
            learning_rate,
            seed,
        };
        if total == 0.0 {
            return Ok(model);
        }

        let design: Vec<(Vec<f64>, Vec<f64>)> = {
            let mut entries: Vec<_> = cells.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            entries.into_iter().map(|(cell, counts)| (model.features(&cell), counts)).collect()
        };
        let mut grad = vec![vec![0.0; n_features]; k];
        let mut probs = vec![0.0; k];
        for _ in 0..epochs {
            for g in grad.iter_mut() {
                g.iter_mut().for_each(|x| *x = 0.0);
            }
            for (x, counts) in &design {
                model.softmax(x, &mut probs);
                let w: f64 = counts.iter().sum();
                for s in 0..k {
                    let residual = w * probs[s] - counts[s];
                    if residual != 0.0 {
                        for (g, xi) in grad[s].iter_mut().zip(x) {
                            *g += residual * xi;
                        }
                    }
                }
            }
            let step = learning_rate / total;
            for (ws, gs) in model.weights.iter_mut().zip(&grad) {
                for (w, g) in ws.iter_mut().zip(gs) {
                    *w -= step * g;
                }
            }
        }
        if model.weights.iter().flatten().any(|w| !w.is_finite()) {
            return Err(Error::Numeric("logistic regression diverged".into()));
        }
        Ok(model)
    }

    fn features(&self, cell: &[u32]) -> Vec<f64> {
        let mut x = vec![0.0; self.n_features];
        x[0] = 1.0;
        for (enc, &code) in self.encodings.iter().zip(cell) {
            match enc {
                Encoding::OneHot { offset, cardinality } => {
                    if (code as usize) < *cardinality {
                        x[offset + code as usize] = 1.0;
                    }
                }
                Encoding::Scaled { offset, repr, mean, scale } => {
                    let v = repr.get(code as usize).copied().unwrap_or(*mean);
                    x[*offset] = (v - mean) / scale;
                }
            }
        }
        x
    }

    fn softmax(&self, x: &[f64], out: &mut [f64]) {
        for (o, w) in out.iter_mut().zip(&self.weights) {
            *o = w.iter().zip(x).map(|(a, b)| a * b).sum();
        }
        let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            z += *o;
        }
        for o in out.iter_mut() {
            *o /= z;
        }
    }
}

impl PosteriorModel for GlmModel {
    fn num_states(&self) -> usize {
        self.weights.len()
    }

    fn predict(&self, cell: &[u32]) -> Belief {
        let x = self.features(cell);
        let mut probs = vec![0.0; self.weights.len()];
        self.softmax(&x, &mut probs);
        Belief::from_masses(&probs).expect("softmax output is positive")
    }

    fn description(&self) -> String {
        format!(
            "glm(epochs={}, learning_rate={}, seed={}, features={})",
            self.epochs, self.learning_rate, self.seed, self.n_features
        )
    }
}
