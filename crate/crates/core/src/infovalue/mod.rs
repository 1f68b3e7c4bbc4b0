//! Best-attainable payoffs and the information values built from them:
//! `R(V)`, `IV`, agent-complementary `ACIV`, instance-level `ILIV`, and the
//! Shapley split of `ACIV` across basic signals.
//!
//! Every quantity is defined over a [`PosteriorSource`], so the same code
//! evaluates exact oracles ([`ExactSource`]) and estimates from data
//! ([`EmpiricalSource`]). [`Evaluator`] adds the dataset-level conveniences:
//! baselines, row-wise evaluation and bootstrap intervals.

mod bootstrap;
mod iliv;
mod shapley;
mod source;

pub use bootstrap::{bootstrap, bootstrap_many, percentile, BootstrapSpec, Interval};
pub use iliv::{exact_iliv, IlivEvaluator, IlivQuery};
pub use shapley::{greedy_aciv, shapley_aciv, GreedyResult, ShapleyMode, ShapleyResult};
pub use source::{CachedSource, EmpiricalSource, ExactSource, PosteriorGroup, PosteriorSource, PosteriorTable};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::decision::DecisionProblem;
use crate::error::{Error, Result};
use crate::estimation::{FittedPosterior, ModelSpec};

/// A set of observable columns (signals and/or agent decisions), kept sorted
/// and free of duplicates.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct SignalSet(Vec<String>);

impl SignalSet {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v: Vec<String> = names.into_iter().map(Into::into).collect();
        v.sort();
        v.dedup();
        Self(v)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// Comma-separated names; blank entries are ignored, so `""` is `∅`.
    pub fn parse(s: &str) -> Self {
        Self::new(s.split(',').map(str::trim).filter(|t| !t.is_empty()))
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.binary_search_by(|n| n.as_str().cmp(name)).is_ok()
    }

    pub fn union(&self, other: &Self) -> Self {
        Self::new(self.0.iter().chain(&other.0).cloned())
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        !self.iter().any(|n| other.contains(n))
    }
}

impl From<Vec<String>> for SignalSet {
    fn from(v: Vec<String>) -> Self {
        Self::new(v)
    }
}

impl From<SignalSet> for Vec<String> {
    fn from(s: SignalSet) -> Self {
        s.0
    }
}

impl fmt::Display for SignalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.0.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    RationalPayoff,
    InformationValue,
    Aciv,
    Iliv,
}

/// A point estimate in payoff units with its baseline and optional
/// bootstrap interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoValueEstimate {
    pub quantity: Quantity,
    pub signals: SignalSet,
    pub agent: SignalSet,
    pub value: f64,
    /// `R(∅)` for payoffs and IV, `R(Db)` for ACIV, `r^v(∅; Db)` for ILIV.
    pub baseline: f64,
    /// Rows with positive weight that the estimate averages over.
    pub n_effective: usize,
    pub interval: Option<Interval>,
}

// ---------------------------------------------------------------------------
// Quantities over any posterior source
// ---------------------------------------------------------------------------

/// `R(V)`.
pub fn rational_payoff<S: PosteriorSource + ?Sized>(
    source: &S,
    problem: &DecisionProblem,
    signals: &SignalSet,
) -> Result<f64> {
    source.payoff(problem, signals)
}

/// `IV(V) = R(V) − R(∅)`; exactly 0 for `V = ∅`.
pub fn information_value<S: PosteriorSource + ?Sized>(
    source: &S,
    problem: &DecisionProblem,
    signals: &SignalSet,
) -> Result<f64> {
    if signals.is_empty() {
        return Ok(0.0);
    }
    Ok(source.payoff(problem, signals)? - source.payoff(problem, &SignalSet::empty())?)
}

/// `ACIV(V; Db) = R(V ∪ Db) − R(Db)`.
pub fn aciv<S: PosteriorSource + ?Sized>(
    source: &S,
    problem: &DecisionProblem,
    signals: &SignalSet,
    agent: &SignalSet,
) -> Result<f64> {
    let joint = signals.union(agent);
    if &joint == agent {
        return Ok(0.0);
    }
    Ok(source.payoff(problem, &joint)? - source.payoff(problem, agent)?)
}

fn check_problem(ds: &Dataset, problem: &DecisionProblem) -> Result<()> {
    if ds.num_states() != problem.num_states() {
        return Err(Error::Schema(format!(
            "dataset has {} states, decision problem has {}",
            ds.num_states(),
            problem.num_states()
        )));
    }
    Ok(())
}

/// Mean over rows of `S(d^r_i, ω_i) − S(d^rb_i, ω_i)` with `d^r` the best
/// response to the posterior on `signals ∪ agent` and `d^rb` to the
/// posterior on `agent` alone. With a fold plan each row is scored by models
/// that never saw it. Returns `(ACIV, R(Db))`.
pub fn aciv_rowwise(
    source: &EmpiricalSource,
    problem: &DecisionProblem,
    signals: &SignalSet,
    agent: &SignalSet,
) -> Result<(f64, f64)> {
    let ds = source.dataset();
    check_problem(ds, problem)?;
    let informed = source.fit(&signals.union(agent))?;
    let baseline = source.fit(agent)?;
    let d_informed = row_decisions(&informed, ds, problem);
    let d_baseline = row_decisions(&baseline, ds, problem);
    let (mut gain, mut base, mut total) = (0.0, 0.0, 0.0);
    for row in 0..ds.n_rows() {
        let w = ds.weight(row);
        let s = ds.state(row);
        gain += w * (problem.score(d_informed[row], s) - problem.score(d_baseline[row], s));
        base += w * problem.score(d_baseline[row], s);
        total += w;
    }
    Ok((gain / total, base / total))
}

fn row_decisions(fitted: &FittedPosterior, ds: &Dataset, problem: &DecisionProblem) -> Vec<usize> {
    let groups = fitted.groups(ds);
    let decisions: Vec<usize> = groups.beliefs.iter().map(|b| problem.rational_decision(b)).collect();
    groups.group_of_row.iter().map(|&g| decisions[g as usize]).collect()
}

// ---------------------------------------------------------------------------
// Dataset-level evaluation
// ---------------------------------------------------------------------------

/// Information values estimated from one dataset under one model spec, with
/// optional bootstrap intervals. Bootstrap resamples reuse the fold plan and
/// refit every estimator.
#[derive(Debug, Clone)]
pub struct Evaluator {
    source: EmpiricalSource,
    problem: DecisionProblem,
    bootstrap: Option<BootstrapSpec>,
}

impl Evaluator {
    pub fn new(ds: &Dataset, problem: &DecisionProblem, model: &ModelSpec) -> Result<Self> {
        check_problem(ds, problem)?;
        Ok(Self { source: EmpiricalSource::new(ds, model)?, problem: problem.clone(), bootstrap: None })
    }

    pub fn with_bootstrap(mut self, spec: BootstrapSpec) -> Self {
        self.bootstrap = Some(spec);
        self
    }

    pub fn source(&self) -> &EmpiricalSource {
        &self.source
    }

    pub fn problem(&self) -> &DecisionProblem {
        &self.problem
    }

    pub fn dataset(&self) -> &Dataset {
        self.source.dataset()
    }

    fn n_effective(&self) -> usize {
        self.dataset().weights().iter().filter(|w| **w > 0.0).count()
    }

    fn interval<F>(&self, f: F) -> Result<Option<Interval>>
    where
        F: Fn(&EmpiricalSource) -> Result<f64> + Sync,
    {
        match &self.bootstrap {
            None => Ok(None),
            Some(spec) => bootstrap(&self.source, spec, f).map(Some),
        }
    }

    fn check_columns(&self, set: &SignalSet) -> Result<()> {
        self.dataset().resolve(set.names()).map(|_| ())
    }

    pub fn rational_payoff(&self, signals: &SignalSet) -> Result<InfoValueEstimate> {
        self.check_columns(signals)?;
        let value = self.source.payoff(&self.problem, signals)?;
        let baseline = self.problem.no_info_payoff(&self.dataset().prior()?)?;
        let interval = self.interval(|src| src.payoff(&self.problem, signals))?;
        Ok(InfoValueEstimate {
            quantity: Quantity::RationalPayoff,
            signals: signals.clone(),
            agent: SignalSet::empty(),
            value,
            baseline,
            n_effective: self.n_effective(),
            interval,
        })
    }

    pub fn information_value(&self, signals: &SignalSet) -> Result<InfoValueEstimate> {
        self.check_columns(signals)?;
        let value = information_value(&self.source, &self.problem, signals)?;
        let baseline = self.source.payoff(&self.problem, &SignalSet::empty())?;
        let interval = self.interval(|src| information_value(src, &self.problem, signals))?;
        Ok(InfoValueEstimate {
            quantity: Quantity::InformationValue,
            signals: signals.clone(),
            agent: SignalSet::empty(),
            value,
            baseline,
            n_effective: self.n_effective(),
            interval,
        })
    }

    /// Row-wise ACIV as the difference of realized payoffs per instance.
    pub fn aciv(&self, signals: &SignalSet, agent: &SignalSet) -> Result<InfoValueEstimate> {
        if agent.is_empty() {
            return Err(Error::Domain("ACIV needs at least one agent-decision column".into()));
        }
        self.check_columns(signals)?;
        self.check_columns(agent)?;
        let (value, baseline) = aciv_rowwise(&self.source, &self.problem, signals, agent)?;
        let interval = self.interval(|src| aciv_rowwise(src, &self.problem, signals, agent).map(|r| r.0))?;
        Ok(InfoValueEstimate {
            quantity: Quantity::Aciv,
            signals: signals.clone(),
            agent: agent.clone(),
            value,
            baseline,
            n_effective: self.n_effective(),
            interval,
        })
    }

    pub fn iliv(&self, query: &IlivQuery) -> Result<InfoValueEstimate> {
        let evaluator = IlivEvaluator::new(&self.source, &self.problem, query)?;
        let value = evaluator.iliv_labels(&query.counterfactual)?;
        let interval = self.interval(|src| {
            IlivEvaluator::new(src, &self.problem, query)?.iliv_labels(&query.counterfactual)
        })?;
        Ok(InfoValueEstimate {
            quantity: Quantity::Iliv,
            signals: query.signals(),
            agent: query.agent.clone(),
            value,
            baseline: evaluator.baseline(),
            n_effective: evaluator.group_size(),
            interval,
        })
    }

    pub fn shapley_aciv(
        &self,
        signals: &[String],
        agent: &SignalSet,
        mode: ShapleyMode,
    ) -> Result<ShapleyResult> {
        for s in signals {
            self.dataset().column_index(s)?;
        }
        self.check_columns(agent)?;
        shapley_aciv(&CachedSource::new(&self.source), &self.problem, signals, agent, mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::fixtures;
    use crate::estimation::EstimatorSpec;

    fn brier() -> DecisionProblem {
        DecisionProblem::brier(0.01).unwrap()
    }

    fn weather_problem() -> DecisionProblem {
        DecisionProblem::matrix(&["dry", "rain"], &["none", "umbrella"], vec![vec![0.0, -100.0], vec![-50.0, 0.0]])
            .unwrap()
    }

    #[test]
    fn signal_set_semantics() {
        let a = SignalSet::parse("b, a,,b");
        assert_eq!(a.names(), &["a", "b"]);
        assert!(SignalSet::parse("").is_empty());
        assert_eq!(a.union(&SignalSet::new(["c", "a"])).len(), 3);
        assert!(a.is_disjoint(&SignalSet::new(["c"])));
        assert_eq!(a.to_string(), "{a,b}");
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(json, "[\"a\",\"b\"]");
        let back: SignalSet = serde_json::from_str("[\"b\",\"a\"]").unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn exact_weather_values() {
        let src = ExactSource::from_dgp(&fixtures::weather()).unwrap();
        let p = weather_problem();
        assert_eq!(rational_payoff(&src, &p, &SignalSet::empty()).unwrap(), -20.0);
        assert_eq!(information_value(&src, &p, &SignalSet::new(["forecast"])).unwrap(), 20.0);
        assert_eq!(information_value(&src, &p, &SignalSet::new(["noise"])).unwrap(), 0.0);
    }

    #[test]
    fn exact_xor_values() {
        let src = ExactSource::from_dgp(&fixtures::xor_with_agent()).unwrap();
        let p = brier();
        let none = rational_payoff(&src, &p, &SignalSet::empty()).unwrap();
        assert!((none - 0.75).abs() < 1e-12);
        assert!(information_value(&src, &p, &SignalSet::new(["s1"])).unwrap().abs() < 1e-12);
        let both = information_value(&src, &p, &SignalSet::new(["s1", "s2"])).unwrap();
        assert!((both - 0.25).abs() < 1e-12);
        let a = aciv(&src, &p, &SignalSet::new(["s2"]), &SignalSet::new(["a"])).unwrap();
        assert!((a - 0.25).abs() < 1e-12);
        assert_eq!(aciv(&src, &p, &SignalSet::new(["a"]), &SignalSet::new(["a"])).unwrap(), 0.0);
    }

    #[test]
    fn more_information_never_hurts_exactly() {
        let src = ExactSource::from_dgp(&fixtures::noisy_signals(0.3, &[0.1, 0.25, 0.4])).unwrap();
        let p = brier();
        let sets = ["", "s1", "s2", "s3", "s1,s2", "s1,s3", "s2,s3", "s1,s2,s3"].map(SignalSet::parse);
        for a in &sets {
            for b in &sets {
                let r = rational_payoff(&src, &p, &a.union(b)).unwrap();
                assert!(r >= rational_payoff(&src, &p, a).unwrap() - 1e-9);
            }
        }
    }

    #[test]
    fn rowwise_and_difference_paths_agree() {
        let ds = fixtures::xor_with_agent().sample(5000, 3).unwrap();
        let model = ModelSpec::cross_fit(EstimatorSpec::frequency(1.0), 5, 11);
        let src = EmpiricalSource::new(&ds, &model).unwrap();
        let p = brier();
        let v = SignalSet::new(["s2"]);
        let db = SignalSet::new(["a"]);
        let (rowwise, base) = aciv_rowwise(&src, &p, &v, &db).unwrap();
        let diff = aciv(&src, &p, &v, &db).unwrap();
        assert!((rowwise - diff).abs() < 1e-9);
        assert!((base - src.payoff(&p, &db).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn evaluator_estimates() {
        let ds = fixtures::xor_with_agent().sample(20_000, 5).unwrap();
        let model = ModelSpec::in_sample(EstimatorSpec::frequency(0.0));
        let ev = Evaluator::new(&ds, &brier(), &model).unwrap();
        let r0 = ev.rational_payoff(&SignalSet::empty()).unwrap();
        assert_eq!(r0.value, r0.baseline);
        assert_eq!(ev.information_value(&SignalSet::empty()).unwrap().value, 0.0);
        let a = ev.aciv(&SignalSet::new(["s2"]), &SignalSet::new(["a"])).unwrap();
        assert!((a.value - 0.25).abs() < 0.01, "{}", a.value);
        assert!(ev.aciv(&SignalSet::new(["s2"]), &SignalSet::empty()).is_err());
        assert!(matches!(ev.rational_payoff(&SignalSet::new(["zz"])), Err(Error::Schema(_))));
    }

    #[test]
    fn state_count_mismatch_rejected() {
        let ds = fixtures::bsc(0.5, 0.1).sample(10, 1).unwrap();
        let p = DecisionProblem::matrix(&["a", "b", "c"], &["x"], vec![vec![0.0, 0.0, 0.0]]).unwrap();
        let model = ModelSpec::in_sample(EstimatorSpec::frequency(1.0));
        assert!(matches!(Evaluator::new(&ds, &p, &model), Err(Error::Schema(_))));
    }
}
