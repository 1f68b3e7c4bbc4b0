//! Calibration error, swap regret, and the check that the swap regret of a
//! best-responding decision rule stays below `2 (M2 - M1) · ECE`.
//!
//! Two ECE flavours are reported. The bound is a theorem for the ECE taken
//! over distinct prediction values, `(1/n) Σ |p̂_i − E[ω | p̂_i]|`, and that is
//! the number the check uses. The usual equal-width binned ECE can only be
//! smaller (averaging inside a bin cancels errors of opposite sign), so the
//! bound computed from it is reported separately as a diagnostic that a
//! miscalibrated model can legitimately violate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::decision::{Belief, DecisionProblem};
use crate::error::{Error, Result};

pub const DEFAULT_ECE_BINS: usize = 10;

/// Slack allowed by the bound check.
const BOUND_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    pub lo: f64,
    pub hi: f64,
    pub mean_prediction: Option<f64>,
    pub empirical_rate: Option<f64>,
    /// Total row weight in the bin (the row count for unweighted data).
    pub count: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    /// ECE over distinct prediction values; the quantity the bound uses.
    pub ece: f64,
    pub ece_binned: f64,
    pub bin_edges: Vec<f64>,
    pub bins: Vec<BinStat>,
    pub swap_regret: f64,
    pub payoff_bounds: (f64, f64),
    /// `2 (M2 − M1) · ece`.
    pub regret_bound: f64,
    pub bound_holds: bool,
    /// `2 (M2 − M1) · ece_binned`.
    pub binned_regret_bound: f64,
    pub binned_bound_holds: bool,
}

fn check_binary(ds: &Dataset) -> Result<()> {
    if ds.num_states() != 2 {
        return Err(Error::Unsupported(format!(
            "calibration needs a binary state, found {} states",
            ds.num_states()
        )));
    }
    Ok(())
}

fn check_len(len: usize, ds: &Dataset) -> Result<()> {
    if len != ds.n_rows() {
        return Err(Error::Schema(format!("{len} predictions for {} rows", ds.n_rows())));
    }
    Ok(())
}

fn check_probs(probs: &[f64], ds: &Dataset) -> Result<()> {
    check_binary(ds)?;
    check_len(probs.len(), ds)?;
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Domain(format!("prediction {p} outside [0,1]")));
    }
    Ok(())
}

/// Equal-width reliability table over predicted `P(ω = 1)` and the binned ECE
/// `Σ_b (n_b / n) |mean prediction_b − empirical rate_b|`.
pub fn reliability(probs: &[f64], ds: &Dataset, bins: usize) -> Result<(f64, Vec<BinStat>)> {
    check_probs(probs, ds)?;
    if bins == 0 {
        return Err(Error::Domain("ECE needs at least one bin".into()));
    }
    let mut weight = vec![0.0; bins];
    let mut pred = vec![0.0; bins];
    let mut hits = vec![0.0; bins];
    for (row, &p) in probs.iter().enumerate() {
        let w = ds.weight(row);
        let b = ((p * bins as f64) as usize).min(bins - 1);
        weight[b] += w;
        pred[b] += w * p;
        hits[b] += w * ds.state(row) as f64;
    }
    let total: f64 = weight.iter().sum();
    let mut ece = 0.0;
    let stats = (0..bins)
        .map(|b| {
            let (mean_prediction, empirical_rate) = if weight[b] > 0.0 {
                let m = pred[b] / weight[b];
                let r = hits[b] / weight[b];
                ece += weight[b] / total * (m - r).abs();
                (Some(m), Some(r))
            } else {
                (None, None)
            };
            BinStat {
                lo: b as f64 / bins as f64,
                hi: (b + 1) as f64 / bins as f64,
                mean_prediction,
                empirical_rate,
                count: weight[b],
            }
        })
        .collect();
    Ok((ece, stats))
}

/// Binned ECE with `bins` equal-width bins; empty bins contribute 0.
pub fn ece(probs: &[f64], ds: &Dataset, bins: usize) -> Result<f64> {
    reliability(probs, ds, bins).map(|(e, _)| e)
}

/// ECE over distinct prediction values.
pub fn ece_by_level(probs: &[f64], ds: &Dataset) -> Result<f64> {
    check_probs(probs, ds)?;
    let mut levels: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    for (row, &p) in probs.iter().enumerate() {
        let e = levels.entry(p.to_bits()).or_insert((0.0, 0.0));
        e.0 += ds.weight(row);
        e.1 += ds.weight(row) * ds.state(row) as f64;
    }
    let total: f64 = levels.values().map(|l| l.0).sum();
    Ok(levels
        .iter()
        .filter(|(_, l)| l.0 > 0.0)
        .map(|(bits, (w, hits))| w / total * (f64::from_bits(*bits) - hits / w).abs())
        .sum())
}

/// `(1/n) max_σ Σ_i [S(σ(d_i), ω_i) − S(d_i, ω_i)]`, solved per played action:
/// the best swap for each action is chosen independently.
pub fn swap_regret(decisions: &[usize], ds: &Dataset, problem: &DecisionProblem) -> Result<f64> {
    check_len(decisions.len(), ds)?;
    if ds.num_states() != problem.num_states() {
        return Err(Error::Schema("problem and dataset disagree on the state space".into()));
    }
    let n_dec = problem.decisions().len();
    let mut masses: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (row, &d) in decisions.iter().enumerate() {
        if d >= n_dec {
            return Err(Error::Domain(format!("decision index {d} out of range")));
        }
        masses.entry(d).or_insert_with(|| vec![0.0; ds.num_states()])[ds.state(row)] += ds.weight(row);
    }
    let total = ds.total_weight();
    let payoff = |d: usize, m: &[f64]| -> f64 {
        m.iter().enumerate().map(|(s, w)| w * problem.score(d, s)).sum()
    };
    let mut gain = 0.0;
    for (&d, m) in &masses {
        let played = payoff(d, m);
        let best = (0..n_dec).map(|alt| payoff(alt, m)).fold(played, f64::max);
        gain += best - played;
    }
    Ok(gain / total)
}

/// ECE, swap regret of the best response to `beliefs`, and both bounds.
pub fn regret_bound_check(
    beliefs: &[Belief],
    ds: &Dataset,
    problem: &DecisionProblem,
    bins: usize,
) -> Result<CalibrationReport> {
    check_binary(ds)?;
    check_len(beliefs.len(), ds)?;
    let probs: Vec<f64> = beliefs.iter().map(Belief::p1).collect();
    let decisions: Vec<usize> = beliefs.iter().map(|b| problem.rational_decision(b)).collect();
    let (ece_binned, stats) = reliability(&probs, ds, bins)?;
    let ece = ece_by_level(&probs, ds)?;
    let swap = swap_regret(&decisions, ds, problem)?;
    let (m1, m2) = problem.payoff().bounds();
    let regret_bound = 2.0 * (m2 - m1) * ece;
    let binned_regret_bound = 2.0 * (m2 - m1) * ece_binned;
    Ok(CalibrationReport {
        ece,
        ece_binned,
        bin_edges: (0..=bins).map(|b| b as f64 / bins as f64).collect(),
        bins: stats,
        swap_regret: swap,
        payoff_bounds: (m1, m2),
        regret_bound,
        bound_holds: swap <= regret_bound + BOUND_TOLERANCE,
        binned_regret_bound,
        binned_bound_holds: swap <= binned_regret_bound + BOUND_TOLERANCE,
    })
}
