use std::collections::HashMap;

use super::SignalSet;
use crate::data::{Dataset, JointDistribution};
use crate::decision::{Belief, DecisionProblem};
use crate::dgp::SyntheticDgp;
use crate::error::{Error, Result};
use crate::estimation::{CrossFitPlan, EstimatorSpec, FittedPosterior, ModelSpec};

/// One block of instances that share a posterior: the belief the rational
/// decision maker acts on and the (unnormalized) mass of each realized state.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGroup {
    pub belief: Belief,
    pub masses: Vec<f64>,
}

/// The rational decision maker's view of a signal set: every instance mapped
/// to the belief it would hold. Payoffs under any decision problem follow
/// without refitting.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTable {
    signals: SignalSet,
    groups: Vec<PosteriorGroup>,
    total: f64,
}

impl PosteriorTable {
    pub fn new(signals: SignalSet, groups: Vec<PosteriorGroup>) -> Result<Self> {
        let total: f64 = groups.iter().flat_map(|g| &g.masses).sum();
        if !(total > 0.0) {
            return Err(Error::EmptyDataset);
        }
        Ok(Self { signals, groups, total })
    }

    pub fn signals(&self) -> &SignalSet {
        &self.signals
    }

    pub fn groups(&self) -> &[PosteriorGroup] {
        &self.groups
    }

    pub fn total_mass(&self) -> f64 {
        self.total
    }

    /// `R(V)`: mean realized payoff of the best response to each group's belief.
    pub fn payoff(&self, problem: &DecisionProblem) -> Result<f64> {
        let k = self.groups.first().map_or(0, |g| g.masses.len());
        if k != problem.num_states() {
            return Err(Error::Schema(format!(
                "posterior has {k} states, decision problem has {}",
                problem.num_states()
            )));
        }
        let mut sum = 0.0;
        for g in &self.groups {
            let d = problem.rational_decision(&g.belief);
            sum += g.masses.iter().enumerate().map(|(s, m)| m * problem.score(d, s)).sum::<f64>();
        }
        Ok(sum / self.total)
    }
}

/// Anything that can say what a rational decision maker would believe after
/// seeing a signal set: the exact process, or a dataset plus an estimator.
pub trait PosteriorSource: Sync {
    fn num_states(&self) -> usize;
    fn table(&self, signals: &SignalSet) -> Result<PosteriorTable>;

    fn payoff(&self, problem: &DecisionProblem, signals: &SignalSet) -> Result<f64> {
        self.table(signals)?.payoff(problem)
    }
}

/// Exact posteriors from a known joint distribution.
#[derive(Debug, Clone)]
pub struct ExactSource {
    joint: JointDistribution,
}

impl ExactSource {
    pub fn new(joint: JointDistribution) -> Self {
        Self { joint }
    }

    pub fn from_dgp(dgp: &SyntheticDgp) -> Result<Self> {
        Ok(Self::new(dgp.joint()?))
    }

    pub fn joint(&self) -> &JointDistribution {
        &self.joint
    }

    pub(crate) fn positions(&self, signals: &SignalSet) -> Result<Vec<usize>> {
        signals.iter().map(|s| self.joint.column_index(s)).collect()
    }
}

impl PosteriorSource for ExactSource {
    fn num_states(&self) -> usize {
        self.joint.num_states()
    }

    fn table(&self, signals: &SignalSet) -> Result<PosteriorTable> {
        let marginal = self.joint.marginalize(&self.positions(signals)?);
        let groups = marginal
            .cells()
            .filter_map(|(_, masses)| {
                Belief::from_masses(masses).map(|belief| PosteriorGroup { belief, masses: masses.clone() })
            })
            .collect();
        PosteriorTable::new(signals.clone(), groups)
    }
}

/// Posteriors estimated from a dataset. All signal sets share one fold plan,
/// so differences between them are not polluted by fold noise.
#[derive(Debug, Clone)]
pub struct EmpiricalSource {
    ds: Dataset,
    estimator: EstimatorSpec,
    plan: Option<CrossFitPlan>,
}

impl EmpiricalSource {
    pub fn new(ds: &Dataset, model: &ModelSpec) -> Result<Self> {
        let plan = model.plan(ds.n_rows())?;
        Ok(Self { ds: ds.clone(), estimator: model.estimator.clone(), plan })
    }

    pub fn with_plan(ds: &Dataset, estimator: &EstimatorSpec, plan: Option<CrossFitPlan>) -> Self {
        Self { ds: ds.clone(), estimator: estimator.clone(), plan }
    }

    pub fn dataset(&self) -> &Dataset {
        &self.ds
    }

    pub fn estimator(&self) -> &EstimatorSpec {
        &self.estimator
    }

    pub fn plan(&self) -> Option<&CrossFitPlan> {
        self.plan.as_ref()
    }

    /// Same estimator and folds over a reweighted copy of the rows.
    pub fn reweighted(&self, weights: Vec<f64>) -> Result<Self> {
        Ok(Self { ds: self.ds.reweighted(weights)?, estimator: self.estimator.clone(), plan: self.plan.clone() })
    }

    pub fn fit(&self, signals: &SignalSet) -> Result<FittedPosterior> {
        let cols = self.ds.resolve(signals.names())?;
        FittedPosterior::fit(&self.ds, &cols, &self.estimator, self.plan.as_ref())
    }
}

impl PosteriorSource for EmpiricalSource {
    fn num_states(&self) -> usize {
        self.ds.num_states()
    }

    fn table(&self, signals: &SignalSet) -> Result<PosteriorTable> {
        let fitted = self.fit(signals)?;
        let row_groups = fitted.groups(&self.ds);
        let k = self.ds.num_states();
        let mut masses = vec![vec![0.0; k]; row_groups.beliefs.len()];
        for (row, &g) in row_groups.group_of_row.iter().enumerate() {
            masses[g as usize][self.ds.state(row)] += self.ds.weight(row);
        }
        let groups = row_groups
            .beliefs
            .into_iter()
            .zip(masses)
            .map(|(belief, masses)| PosteriorGroup { belief, masses })
            .collect();
        PosteriorTable::new(signals.clone(), groups)
    }
}

/// Memoizes tables by signal set; useful when one source answers many
/// overlapping queries (Shapley enumeration, sweeps).
pub struct CachedSource<'a, S: PosteriorSource> {
    inner: &'a S,
    cache: std::sync::Mutex<HashMap<SignalSet, PosteriorTable>>,
}

impl<'a, S: PosteriorSource> CachedSource<'a, S> {
    pub fn new(inner: &'a S) -> Self {
        Self { inner, cache: Default::default() }
    }
}

impl<S: PosteriorSource> PosteriorSource for CachedSource<'_, S> {
    fn num_states(&self) -> usize {
        self.inner.num_states()
    }

    fn table(&self, signals: &SignalSet) -> Result<PosteriorTable> {
        if let Some(t) = self.cache.lock().expect("cache lock").get(signals) {
            return Ok(t.clone());
        }
        let t = self.inner.table(signals)?;
        self.cache.lock().expect("cache lock").insert(signals.clone(), t.clone());
        Ok(t)
    }
}
