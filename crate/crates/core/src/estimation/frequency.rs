use std::collections::HashMap;

use super::PosteriorModel;
use crate::data::Dataset;
use crate::decision::Belief;

/// Smoothed cell-frequency posterior: `(count_ω + α) / (count + α|Ω|)` per
/// distinct conditioning cell, the smoothed marginal prior for unseen cells.
#[derive(Debug, Clone)]
pub struct FrequencyModel {
    counts: HashMap<Vec<u32>, Vec<f64>>,
    prior_counts: Vec<f64>,
    smoothing: f64,
}

impl FrequencyModel {
    pub fn fit(ds: &Dataset, cols: &[usize], rows: &[usize], smoothing: f64) -> Self {
        let k = ds.num_states();
        let mut counts: HashMap<Vec<u32>, Vec<f64>> = HashMap::new();
        let mut prior_counts = vec![0.0; k];
        for &row in rows {
            let w = ds.weight(row);
            if w == 0.0 {
                continue;
            }
            let s = ds.state(row);
            counts.entry(ds.cell(row, cols)).or_insert_with(|| vec![0.0; k])[s] += w;
            prior_counts[s] += w;
        }
        Self { counts, prior_counts, smoothing }
    }

    /// Number of distinct cells seen in training.
    pub fn n_cells(&self) -> usize {
        self.counts.len()
    }

    /// Number of states with positive training mass.
    pub fn n_observed_states(&self) -> usize {
        self.prior_counts.iter().filter(|c| **c > 0.0).count()
    }

    fn smoothed(&self, counts: &[f64]) -> Belief {
        let masses: Vec<f64> = counts.iter().map(|c| c + self.smoothing).collect();
        Belief::from_masses(&masses).unwrap_or_else(|| Belief::uniform(counts.len()))
    }
}

impl PosteriorModel for FrequencyModel {
    fn num_states(&self) -> usize {
        self.prior_counts.len()
    }

    fn predict(&self, cell: &[u32]) -> Belief {
        match self.counts.get(cell) {
            Some(c) => self.smoothed(c),
            None => self.smoothed(&self.prior_counts),
        }
    }

    fn description(&self) -> String {
        format!("frequency(smoothing={}, cells={})", self.smoothing, self.counts.len())
    }
}
