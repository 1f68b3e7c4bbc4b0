//! Decision problems: states, decisions, payoff tables and the Bayesian-rational
//! best response.
//!
//! A decision problem is the triple `(Ω, D, S)` with finite `Ω` and `D`.
//! Continuous decision spaces (probability reports) are represented by an
//! explicit ascending grid. Everything here is immutable after construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used by the argmax: a later decision must beat the incumbent by
/// more than this (relative) amount to replace it. Near-ties therefore resolve
/// to the lowest decision index.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Default grid step for probability-report decision spaces.
pub const DEFAULT_GRID_STEP: f64 = 0.01;

const BELIEF_TOLERANCE: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Belief
// ---------------------------------------------------------------------------

/// A probability vector over the state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Domain("belief over an empty state space".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0 + BELIEF_TOLERANCE) {
            return Err(Error::Domain(format!("belief entries must lie in [0,1]: {probs:?}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > BELIEF_TOLERANCE {
            return Err(Error::Domain(format!("belief sums to {total}, expected 1")));
        }
        Ok(Self(probs))
    }

    /// Normalizes non-negative masses. All-zero masses yield `None`.
    pub fn from_masses(masses: &[f64]) -> Option<Self> {
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return None;
        }
        Some(Self(masses.iter().map(|m| m / total).collect()))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    /// Point mass on state `k`.
    pub fn point(n: usize, k: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[k] = 1.0;
        Self(probs)
    }

    /// Binary belief with `P(ω = 1) = p`.
    pub fn binary(p: f64) -> Result<Self> {
        Self::new(vec![1.0 - p, p])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `P(ω = 1)` for binary beliefs.
    pub fn p1(&self) -> f64 {
        self.0[1]
    }
}

// ---------------------------------------------------------------------------
// State and decision spaces
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSpace {
    labels: Vec<String>,
}

impl StateSpace {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::Domain("state space needs at least two states".into()));
        }
        check_unique(&labels, "state")?;
        Ok(Self { labels })
    }

    pub fn binary() -> Self {
        Self { labels: vec!["0".into(), "1".into()] }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Numeric grid `lo, lo + step, ..., hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !lo.is_finite() || !hi.is_finite() || hi < lo {
            return Err(Error::Domain(format!("invalid grid lo={lo} hi={hi} step={step}")));
        }
        let steps = (hi - lo) / step;
        if (steps - steps.round()).abs() > 1e-6 {
            return Err(Error::Domain(format!(
                "grid step {step} does not divide [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi, step })
    }

    pub fn unit(step: f64) -> Result<Self> {
        Self::new(0.0, 1.0, step)
    }

    pub fn len(&self) -> usize {
        ((self.hi - self.lo) / self.step).round() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, k: usize) -> f64 {
        if k + 1 == self.len() {
            self.hi
        } else {
            self.lo + k as f64 * self.step
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }

    /// Index of the grid point nearest to `x`, clamped to the grid.
    pub fn nearest(&self, x: f64) -> usize {
        let k = ((x - self.lo) / self.step).round();
        if k <= 0.0 || k.is_nan() {
            0
        } else {
            (k as usize).min(self.len() - 1)
        }
    }

    /// Number of decimals needed to print grid points exactly.
    pub fn decimals(&self) -> usize {
        (0..=10)
            .find(|&d| {
                let scaled = self.step * 10f64.powi(d as i32);
                (scaled - scaled.round()).abs() < 1e-9
                    && {
                        let lo = self.lo * 10f64.powi(d as i32);
                        (lo - lo.round()).abs() < 1e-9
                    }
            })
            .unwrap_or(10)
    }

    pub fn labels(&self) -> Vec<String> {
        let decimals = self.decimals();
        self.points().iter().map(|p| format!("{p:.decimals$}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionSpace {
    labels: Vec<String>,
    grid: Option<Grid>,
}

impl DecisionSpace {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Domain("decision space is empty".into()));
        }
        check_unique(&labels, "decision")?;
        Ok(Self { labels, grid: None })
    }

    pub fn grid(grid: Grid) -> Self {
        Self { labels: grid.labels(), grid: Some(grid) }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn grid_descriptor(&self) -> Option<Grid> {
        self.grid
    }

    /// Numeric value of decision `d` when the space is grid-backed.
    pub fn value(&self, d: usize) -> Option<f64> {
        self.grid.map(|g| g.point(d))
    }
}

fn check_unique(labels: &[String], what: &str) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(Error::Domain(format!("duplicate {what} label {l:?}")));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Payoffs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PayoffKind {
    Matrix,
    Brier,
    VShaped { mu: f64 },
}

/// Payoff table `S[d][ω]` with cached bounds `(M1, M2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffFunction {
    kind: PayoffKind,
    table: Vec<Vec<f64>>,
    bounds: (f64, f64),
}

impl PayoffFunction {
    pub fn matrix(table: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_kind(PayoffKind::Matrix, table)
    }

    fn with_kind(kind: PayoffKind, table: Vec<Vec<f64>>) -> Result<Self> {
        let width = table.first().map(Vec::len).unwrap_or(0);
        if table.is_empty() || width == 0 {
            return Err(Error::Domain("payoff table is empty".into()));
        }
        if table.iter().any(|row| row.len() != width) {
            return Err(Error::Schema("payoff table rows differ in length".into()));
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in table.iter().flatten() {
            if !v.is_finite() {
                return Err(Error::Domain("payoff entries must be finite".into()));
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Ok(Self { kind, table, bounds: (lo, hi) })
    }

    pub fn kind(&self) -> PayoffKind {
        self.kind
    }

    pub fn num_decisions(&self) -> usize {
        self.table.len()
    }

    pub fn num_states(&self) -> usize {
        self.table[0].len()
    }

    /// `(M1, M2)`: smallest and largest table entries.
    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    pub fn table(&self) -> &[Vec<f64>] {
        &self.table
    }

    #[inline]
    pub fn get(&self, d: usize, state: usize) -> f64 {
        self.table[d][state]
    }
}

/// V-shaped scoring rule with kink `mu` for a binary state.
///
/// For `mu <= 1/2` the report `d` only matters through `d <= mu`. Kinks above
/// one half mirror both the report and the state, `S_mu(d, w) = S_{1-mu}(1-d, 1-w)`,
/// so that the best response switches at belief `mu`.
pub fn v_shaped_payoff(mu: f64, d: f64, state: u8) -> Result<f64> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::Domain(format!("kink must lie in (0,1), got {mu}")));
    }
    if state > 1 {
        return Err(Error::Domain(format!("state must be binary, got {state}")));
    }
    if mu > 0.5 {
        return v_shaped_payoff(1.0 - mu, 1.0 - d, 1 - state);
    }
    let slope = 0.5 * (f64::from(state) - mu) / (1.0 - mu);
    Ok(if d <= mu { 0.5 - slope } else { 0.5 + slope })
}

// ---------------------------------------------------------------------------
// DecisionProblem
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionProblem {
    states: StateSpace,
    decisions: DecisionSpace,
    payoff: PayoffFunction,
}

impl DecisionProblem {
    pub fn new(states: StateSpace, decisions: DecisionSpace, payoff: PayoffFunction) -> Result<Self> {
        if payoff.num_decisions() != decisions.len() || payoff.num_states() != states.len() {
            return Err(Error::Schema(format!(
                "payoff table is {}x{}, expected {}x{}",
                payoff.num_decisions(),
                payoff.num_states(),
                decisions.len(),
                states.len()
            )));
        }
        Ok(Self { states, decisions, payoff })
    }

    pub fn matrix(states: &[&str], decisions: &[&str], table: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(
            StateSpace::new(states.iter().map(|s| s.to_string()).collect())?,
            DecisionSpace::new(decisions.iter().map(|s| s.to_string()).collect())?,
            PayoffFunction::matrix(table)?,
        )
    }

    /// Quadratic score `1 - (d - ω)^2` over reports on a `[0, 1]` grid.
    pub fn brier(step: f64) -> Result<Self> {
        let grid = Grid::unit(step)?;
        let table = grid
            .points()
            .iter()
            .map(|&d| vec![1.0 - d * d, 1.0 - (d - 1.0) * (d - 1.0)])
            .collect();
        Self::new(
            StateSpace::binary(),
            DecisionSpace::grid(grid),
            PayoffFunction::with_kind(PayoffKind::Brier, table)?,
        )
    }

    /// V-shaped rule with kink `mu` over reports on a `[0, 1]` grid. A step of
    /// 1 gives the two-action problem `{0, 1}`, which attains the same payoffs.
    pub fn v_shaped(mu: f64, step: f64) -> Result<Self> {
        let grid = Grid::unit(step)?;
        let table = grid
            .points()
            .iter()
            .map(|&d| Ok(vec![v_shaped_payoff(mu, d, 0)?, v_shaped_payoff(mu, d, 1)?]))
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            StateSpace::binary(),
            DecisionSpace::grid(grid),
            PayoffFunction::with_kind(PayoffKind::VShaped { mu }, table)?,
        )
    }

    pub fn from_config(config: &ProblemConfig) -> Result<Self> {
        match config {
            ProblemConfig::Matrix { states, decisions, payoff } => Self::new(
                StateSpace::new(states.clone())?,
                DecisionSpace::new(decisions.clone())?,
                PayoffFunction::matrix(payoff.clone())?,
            ),
            ProblemConfig::Brier { step } => Self::brier(*step),
            ProblemConfig::VShaped { mu, step } => Self::v_shaped(*mu, *step),
        }
    }

    pub fn states(&self) -> &StateSpace {
        &self.states
    }

    pub fn decisions(&self) -> &DecisionSpace {
        &self.decisions
    }

    pub fn payoff(&self) -> &PayoffFunction {
        &self.payoff
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    #[inline]
    pub fn score(&self, d: usize, state: usize) -> f64 {
        self.payoff.get(d, state)
    }

    pub fn expected_payoff(&self, d: usize, belief: &Belief) -> Result<f64> {
        if d >= self.decisions.len() {
            return Err(Error::Domain(format!(
                "decision index {d} out of range (|D| = {})",
                self.decisions.len()
            )));
        }
        self.check_belief(belief)?;
        Ok(self.expected_unchecked(d, belief.probs()))
    }

    #[inline]
    fn expected_unchecked(&self, d: usize, probs: &[f64]) -> f64 {
        self.payoff.table[d].iter().zip(probs).map(|(s, p)| s * p).sum()
    }

    fn check_belief(&self, belief: &Belief) -> Result<()> {
        if belief.len() != self.num_states() {
            return Err(Error::Schema(format!(
                "belief has {} entries, problem has {} states",
                belief.len(),
                self.num_states()
            )));
        }
        Ok(())
    }

    /// Best response to `belief`, lowest index among (near-)ties.
    ///
    /// Panics if the belief length does not match the state space.
    pub fn rational_decision(&self, belief: &Belief) -> usize {
        self.best_response(belief.probs()).0
    }

    /// Best response to an arbitrary non-negative weight vector over states,
    /// with its (unnormalized) expected payoff.
    pub fn best_response(&self, weights: &[f64]) -> (usize, f64) {
        assert_eq!(weights.len(), self.num_states(), "belief/state arity mismatch");
        let mut best = 0;
        let mut best_value = self.expected_unchecked(0, weights);
        for d in 1..self.decisions.len() {
            let value = self.expected_unchecked(d, weights);
            if value > best_value + TIE_TOLERANCE * best_value.abs().max(1.0) {
                best = d;
                best_value = value;
            }
        }
        (best, best_value)
    }

    /// `R(∅)`: the best fixed action's expected payoff under `prior`.
    pub fn no_info_payoff(&self, prior: &Belief) -> Result<f64> {
        self.check_belief(prior)?;
        Ok(self.best_response(prior.probs()).1)
    }

    /// Same problem with every payoff mapped through `a * s + b`.
    pub fn affine(&self, a: f64, b: f64) -> Result<Self> {
        let table = self
            .payoff
            .table
            .iter()
            .map(|row| row.iter().map(|s| a * s + b).collect())
            .collect();
        Self::new(self.states.clone(), self.decisions.clone(), PayoffFunction::matrix(table)?)
    }
}

fn default_step() -> f64 {
    DEFAULT_GRID_STEP
}

fn default_v_step() -> f64 {
    1.0
}

/// Serializable description of a decision problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemConfig {
    Matrix {
        states: Vec<String>,
        decisions: Vec<String>,
        /// Rows are decisions, columns are states.
        payoff: Vec<Vec<f64>>,
    },
    Brier {
        #[serde(default = "default_step")]
        step: f64,
    },
    VShaped {
        mu: f64,
        #[serde(default = "default_v_step")]
        step: f64,
    },
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weather() -> DecisionProblem {
        DecisionProblem::matrix(
            &["dry", "rain"],
            &["no-umbrella", "umbrella"],
            vec![vec![0.0, -100.0], vec![-50.0, 0.0]],
        )
        .unwrap()
    }

    #[test]
    fn weather_expectations() {
        let s = weather();
        let b = Belief::new(vec![0.8, 0.2]).unwrap();
        assert!((s.expected_payoff(0, &b).unwrap() + 20.0).abs() < 1e-12);
        assert!((s.expected_payoff(1, &b).unwrap() + 40.0).abs() < 1e-12);
        assert_eq!(s.rational_decision(&b), 0);
        assert!((s.no_info_payoff(&b).unwrap() + 20.0).abs() < 1e-12);
    }

    #[test]
    fn weather_indifference_breaks_low() {
        let s = weather();
        let b = Belief::new(vec![2.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert_eq!(s.rational_decision(&b), 0);
    }

    #[test]
    fn point_mass_expectation() {
        let s = weather();
        for state in 0..2 {
            let b = Belief::point(2, state);
            for d in 0..2 {
                assert_eq!(s.expected_payoff(d, &b).unwrap(), s.score(d, state));
            }
            let best = (0..2).map(|d| s.score(d, state)).fold(f64::MIN, f64::max);
            assert_eq!(s.no_info_payoff(&b).unwrap(), best);
        }
    }

    #[test]
    fn decision_out_of_range() {
        let s = weather();
        let b = Belief::uniform(2);
        assert!(matches!(s.expected_payoff(2, &b), Err(Error::Domain(_))));
    }

    #[test]
    fn brier_at_half() {
        let s = DecisionProblem::brier(0.01).unwrap();
        assert_eq!(s.decisions().len(), 101);
        let b = Belief::uniform(2);
        let d = s.rational_decision(&b);
        assert_eq!(s.decisions().labels()[d], "0.50");
        assert!((s.no_info_payoff(&b).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(s.payoff().bounds(), (0.0, 1.0));
    }

    #[test]
    fn v_shaped_values() {
        assert!((v_shaped_payoff(0.5, 1.0, 1).unwrap() - 1.0).abs() < 1e-12);
        assert!((v_shaped_payoff(0.25, 0.2, 0).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(v_shaped_payoff(0.5, 0.4, 1).unwrap().abs() < 1e-12);
        assert!(matches!(v_shaped_payoff(0.0, 0.5, 1), Err(Error::Domain(_))));
        assert!(matches!(v_shaped_payoff(1.0, 0.5, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn v_shaped_switches_at_kink() {
        for &mu in &[0.1, 0.3, 0.5, 0.7, 0.9] {
            let s = DecisionProblem::v_shaped(mu, 1.0).unwrap();
            let below = Belief::binary(mu - 0.05).unwrap();
            let above = Belief::binary(mu + 0.05).unwrap();
            assert_eq!(s.rational_decision(&below), 0, "mu={mu}");
            assert_eq!(s.rational_decision(&above), 1, "mu={mu}");
        }
    }

    #[test]
    fn grid_rejects_bad_step() {
        assert!(Grid::unit(0.0).is_err());
        assert!(Grid::unit(0.3).is_err());
        assert_eq!(Grid::unit(0.1).unwrap().len(), 11);
    }

    #[test]
    fn belief_validation() {
        assert!(Belief::new(vec![0.5, 0.6]).is_err());
        assert!(Belief::new(vec![-0.1, 1.1]).is_err());
        assert!(Belief::from_masses(&[0.0, 0.0]).is_none());
        assert_eq!(Belief::from_masses(&[1.0, 3.0]).unwrap().p1(), 0.75);
    }

    #[test]
    fn config_parses() {
        let cfg: ProblemConfig = toml::from_str("kind = \"brier\"").unwrap();
        assert_eq!(cfg, ProblemConfig::Brier { step: 0.01 });
        let cfg: ProblemConfig =
            serde_json::from_str(r#"{"kind":"v-shaped","mu":0.3}"#).unwrap();
        let p = DecisionProblem::from_config(&cfg).unwrap();
        assert_eq!(p.decisions().len(), 2);
    }
}
