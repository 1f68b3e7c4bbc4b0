//! Shapley values of cooperative games over at most 64 players, exact by
//! subset enumeration or estimated by permutation sampling.
//!
//! Coalitions are bit masks: player `i` is in coalition `c` iff bit `i` is set.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest player count for exact enumeration.
pub const MAX_EXACT_PLAYERS: usize = 12;

pub type Coalition = u64;

/// Shapley scores together with the values of the empty and grand coalitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyValues {
    pub scores: Vec<f64>,
    pub empty_value: f64,
    pub full_value: f64,
    /// Per-player standard error, present for sampled estimates with at
    /// least two independent sampling units.
    pub standard_errors: Option<Vec<f64>>,
}

impl ShapleyValues {
    /// `Σφ − (ν(full) − ν(∅))`.
    pub fn efficiency_gap(&self) -> f64 {
        self.scores.iter().sum::<f64>() - (self.full_value - self.empty_value)
    }
}

pub fn full_coalition(n: usize) -> Coalition {
    if n == 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// `|S|! (n − |S| − 1)! / n!` for every coalition size `|S| < n`.
pub fn shapley_weights(n: usize) -> Vec<f64> {
    let mut fact = vec![1.0f64; n + 1];
    for k in 1..=n {
        fact[k] = fact[k - 1] * k as f64;
    }
    (0..n).map(|s| fact[s] * fact[n - s - 1] / fact[n]).collect()
}

/// Exact Shapley values. `value` is evaluated once per coalition, in
/// parallel; results do not depend on scheduling.
pub fn exact<F>(n: usize, value: F) -> Result<ShapleyValues>
where
    F: Fn(Coalition) -> Result<f64> + Sync,
{
    if n > MAX_EXACT_PLAYERS {
        return Err(Error::Budget(format!(
            "exact Shapley over {n} players exceeds the limit of {MAX_EXACT_PLAYERS}; use sampling or greedy mode"
        )));
    }
    let values: Vec<f64> = (0..1u64 << n).into_par_iter().map(&value).collect::<Result<_>>()?;
    Ok(from_table(n, &values))
}

/// Shapley values from a complete table of coalition values indexed by mask.
pub fn from_table(n: usize, values: &[f64]) -> ShapleyValues {
    assert_eq!(values.len(), 1 << n, "value table must cover every coalition");
    let weights = shapley_weights(n);
    let scores = (0..n)
        .map(|i| {
            let bit = 1u64 << i;
            (0..1u64 << n)
                .filter(|c| c & bit == 0)
                .map(|c| weights[c.count_ones() as usize] * (values[(c | bit) as usize] - values[c as usize]))
                .sum()
        })
        .collect();
    ShapleyValues {
        scores,
        empty_value: values[0],
        full_value: values[values.len() - 1],
        standard_errors: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationSpec {
    pub permutations: usize,
    pub seed: u64,
    /// Pair every sampled permutation with its reverse.
    #[serde(default = "default_antithetic")]
    pub antithetic: bool,
}

fn default_antithetic() -> bool {
    true
}

/// Permutation-sampling estimate. Each permutation contributes the marginal
/// gains along its order, which telescope to `ν(full) − ν(∅)`; the estimate
/// is their average. With antithetic sampling, permutation `2k+1` is the
/// reverse of permutation `2k` and a pair counts as one unit for the
/// standard error.
pub fn permutation<F>(n: usize, spec: &PermutationSpec, value: F) -> Result<ShapleyValues>
where
    F: Fn(Coalition) -> Result<f64>,
{
    if spec.permutations == 0 {
        return Err(Error::Domain("permutation sampling needs at least one permutation".into()));
    }
    if n > 64 {
        return Err(Error::Budget(format!("{n} players exceed the 64-player limit")));
    }
    let mut cache: HashMap<Coalition, f64> = HashMap::new();
    let mut eval = |c: Coalition| -> Result<f64> {
        if let Some(v) = cache.get(&c) {
            return Ok(*v);
        }
        let v = value(c)?;
        cache.insert(c, v);
        Ok(v)
    };
    let empty_value = eval(0)?;
    let full_value = eval(full_coalition(n))?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let unit_size = if spec.antithetic { 2 } else { 1 };
    let mut sums = vec![0.0; n];
    let mut units: Vec<Vec<f64>> = Vec::new();
    let mut current = vec![0.0; n];
    let mut in_unit = 0;
    for k in 0..spec.permutations {
        if spec.antithetic && k % 2 == 1 {
            order.reverse();
        } else {
            order.shuffle(&mut rng);
        }
        let mut coalition: Coalition = 0;
        let mut prev = empty_value;
        for &i in &order {
            coalition |= 1u64 << i;
            let v = eval(coalition)?;
            current[i] += v - prev;
            sums[i] += v - prev;
            prev = v;
        }
        in_unit += 1;
        if in_unit == unit_size || k + 1 == spec.permutations {
            units.push(current.iter().map(|x| x / in_unit as f64).collect());
            current.iter_mut().for_each(|x| *x = 0.0);
            in_unit = 0;
        }
    }

    let scores: Vec<f64> = sums.iter().map(|s| s / spec.permutations as f64).collect();
    let m = units.len() as f64;
    let standard_errors = (units.len() >= 2).then(|| {
        (0..n)
            .map(|i| {
                let mean = units.iter().map(|u| u[i]).sum::<f64>() / m;
                let var = units.iter().map(|u| (u[i] - mean).powi(2)).sum::<f64>() / (m - 1.0);
                (var / m).sqrt()
            })
            .collect()
    });
    Ok(ShapleyValues { scores, empty_value, full_value, standard_errors })
}
