use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{EmpiricalSource, ExactSource, SignalSet};
use crate::data::Dataset;
use crate::decision::{Belief, DecisionProblem};
use crate::error::{Error, Result};
use crate::estimation::FittedPosterior;

/// Which instances to look at (`actual`, the realization `v` defining the
/// group), what the rational decision maker is shown instead
/// (`counterfactual`, `v′`), and the agent columns `Db` it also sees.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IlivQuery {
    pub actual: BTreeMap<String, String>,
    pub counterfactual: BTreeMap<String, String>,
    #[serde(default)]
    pub agent: SignalSet,
}

impl IlivQuery {
    pub fn new(actual: &[(&str, &str)], counterfactual: &[(&str, &str)], agent: SignalSet) -> Self {
        let map = |pairs: &[(&str, &str)]| pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        Self { actual: map(actual), counterfactual: map(counterfactual), agent }
    }

    pub fn signals(&self) -> SignalSet {
        SignalSet::new(self.actual.keys().cloned())
    }
}

fn check_sets(signals: &SignalSet, agent: &SignalSet) -> Result<()> {
    if signals.is_empty() {
        return Err(Error::Domain("ILIV needs a non-empty signal realization".into()));
    }
    if !signals.is_disjoint(agent) {
        return Err(Error::Domain(format!("signal set {signals} overlaps agent columns {agent}")));
    }
    Ok(())
}

/// `ILIV^v(v′; Db)` estimated from data (Algorithm 2) for one instance group
/// `{i : v_i = v}`, reusable across many counterfactuals `v′`.
///
/// Each group row keeps its own `d^b_i` and `ω_i`; only the signal part of
/// the informed model's input is replaced by `v′`. Under cross-fitting a row
/// is always scored by the models of its own fold.
pub struct IlivEvaluator {
    ds: Dataset,
    problem: DecisionProblem,
    names: Vec<String>,
    union_cols: Vec<usize>,
    /// Position of each signal (in `names` order) inside `union_cols`.
    positions: Vec<usize>,
    informed: FittedPosterior,
    rows: Vec<usize>,
    group_weight: f64,
    baseline: f64,
    memo: Mutex<HashMap<(usize, Vec<u32>), usize>>,
}

impl IlivEvaluator {
    pub fn new(source: &EmpiricalSource, problem: &DecisionProblem, query: &IlivQuery) -> Result<Self> {
        let signals = query.signals();
        let cf_keys = SignalSet::new(query.counterfactual.keys().cloned());
        if cf_keys != signals {
            return Err(Error::Schema(format!(
                "counterfactual covers {cf_keys}, actual realization covers {signals}"
            )));
        }
        let ds = source.dataset();
        let names: Vec<String> = signals.names().to_vec();
        let actual = codes_of(ds, &names, &query.actual)?;
        Self::from_codes(source, problem, &signals, &actual, &query.agent)
    }

    /// `actual` holds codes aligned with the sorted names of `signals`.
    pub fn from_codes(
        source: &EmpiricalSource,
        problem: &DecisionProblem,
        signals: &SignalSet,
        actual: &[u32],
        agent: &SignalSet,
    ) -> Result<Self> {
        check_sets(signals, agent)?;
        let ds = source.dataset().clone();
        if ds.num_states() != problem.num_states() {
            return Err(Error::Schema("dataset and decision problem disagree on the state space".into()));
        }
        let names: Vec<String> = signals.names().to_vec();
        let v_cols = names.iter().map(|n| ds.column_index(n)).collect::<Result<Vec<_>>>()?;
        if actual.len() != v_cols.len() {
            return Err(Error::Schema("realization arity does not match the signal set".into()));
        }
        for (&c, &code) in v_cols.iter().zip(actual) {
            if code as usize >= ds.column(c).cardinality() {
                return Err(Error::Domain(format!("code {code} outside the domain of {:?}", ds.column(c).name())));
            }
        }
        let union = signals.union(agent);
        let union_cols = ds.resolve(union.names())?;
        let positions = v_cols
            .iter()
            .map(|c| union_cols.iter().position(|u| u == c).expect("signal is in the union"))
            .collect();

        let rows: Vec<usize> = (0..ds.n_rows())
            .filter(|&r| ds.weight(r) > 0.0 && v_cols.iter().zip(actual).all(|(&c, &v)| ds.column(c).codes()[r] == v))
            .collect();
        if rows.is_empty() {
            let key: Vec<String> = names
                .iter()
                .zip(&v_cols)
                .zip(actual)
                .map(|((n, &c), &v)| format!("{n}={}", ds.column(c).labels()[v as usize]))
                .collect();
            return Err(Error::NoInstances(format!("no rows with {}", key.join(", "))));
        }

        let informed = source.fit(&union)?;
        let base = source.fit(agent)?;
        let mut base_memo: HashMap<(usize, Vec<u32>), usize> = HashMap::new();
        let agent_cols = base.columns().to_vec();
        let (mut group_weight, mut base_sum) = (0.0, 0.0);
        for &r in &rows {
            let key = (base.fold_of(r), ds.cell(r, &agent_cols));
            let d = *base_memo
                .entry(key)
                .or_insert_with(|| problem.rational_decision(&base.row_belief(&ds, r)));
            group_weight += ds.weight(r);
            base_sum += ds.weight(r) * problem.score(d, ds.state(r));
        }
        Ok(Self {
            problem: problem.clone(),
            names,
            union_cols,
            positions,
            informed,
            rows,
            group_weight,
            baseline: base_sum / group_weight,
            memo: Mutex::new(HashMap::new()),
            ds,
        })
    }

    pub fn signal_names(&self) -> &[String] {
        &self.names
    }

    /// Cardinality of each signal, in `signal_names` order.
    pub fn domain(&self) -> Vec<usize> {
        self.positions.iter().map(|&p| self.ds.column(self.union_cols[p]).cardinality()).collect()
    }

    /// `r^v(∅; Db)`: mean payoff on the group of the agent-only rational decision.
    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    pub fn group_size(&self) -> usize {
        self.rows.len()
    }

    pub fn group_weight(&self) -> f64 {
        self.group_weight
    }

    /// `r^v(v′; Db)`.
    pub fn payoff(&self, counterfactual: &[u32]) -> Result<f64> {
        let domain = self.domain();
        if counterfactual.len() != domain.len() {
            return Err(Error::Schema("counterfactual arity does not match the signal set".into()));
        }
        for ((&v, &card), name) in counterfactual.iter().zip(&domain).zip(&self.names) {
            if v as usize >= card {
                return Err(Error::Domain(format!("code {v} outside the domain of {name:?}")));
            }
        }
        let mut memo = self.memo.lock().expect("memo lock");
        let mut sum = 0.0;
        for &r in &self.rows {
            let mut cell = self.ds.cell(r, &self.union_cols);
            for (&p, &v) in self.positions.iter().zip(counterfactual) {
                cell[p] = v;
            }
            let fold = self.informed.fold_of(r);
            let model = self.informed.model_for_row(r);
            let d = *memo
                .entry((fold, cell))
                .or_insert_with_key(|(_, cell)| self.problem.rational_decision(&model.predict(cell)));
            sum += self.ds.weight(r) * self.problem.score(d, self.ds.state(r));
        }
        Ok(sum / self.group_weight)
    }

    /// `ILIV^v(v′; Db) = r^v(v′; Db) − r^v(∅; Db)`.
    pub fn iliv(&self, counterfactual: &[u32]) -> Result<f64> {
        Ok(self.payoff(counterfactual)? - self.baseline)
    }

    pub fn iliv_labels(&self, counterfactual: &BTreeMap<String, String>) -> Result<f64> {
        self.iliv(&codes_of(&self.ds, &self.names, counterfactual)?)
    }
}

fn codes_of(ds: &Dataset, names: &[String], labels: &BTreeMap<String, String>) -> Result<Vec<u32>> {
    names
        .iter()
        .map(|n| {
            let col = ds.column_by_name(n)?;
            let label = labels.get(n).ok_or_else(|| Error::Schema(format!("no value given for {n:?}")))?;
            col.code_of(label)
                .ok_or_else(|| Error::Domain(format!("{label:?} is not a value of {n:?}")))
        })
        .collect()
}

/// Exact `ILIV^v(v′; Db)` from a known joint. Realizations are codes aligned
/// with the sorted names of `signals`. A counterfactual that never co-occurs
/// with some agent decision of the group has no posterior and is an error.
pub fn exact_iliv(
    source: &ExactSource,
    problem: &DecisionProblem,
    signals: &SignalSet,
    actual: &[u32],
    counterfactual: &[u32],
    agent: &SignalSet,
) -> Result<f64> {
    check_sets(signals, agent)?;
    let k = signals.len();
    if actual.len() != k || counterfactual.len() != k {
        return Err(Error::Schema("realization arity does not match the signal set".into()));
    }
    let joint = source.joint();
    let mut keep = source.positions(signals)?;
    keep.extend(source.positions(agent)?);
    for (i, (&a, &c)) in actual.iter().zip(counterfactual).enumerate() {
        let card = joint.cardinalities()[keep[i]];
        if a as usize >= card || c as usize >= card {
            return Err(Error::Domain(format!("code outside the domain of {:?}", signals.names()[i])));
        }
    }
    let marginal = joint.marginalize(&keep);
    let cells: HashMap<&[u32], &Vec<f64>> = marginal.cells().map(|(key, m)| (key.as_slice(), m)).collect();
    let mut by_agent: HashMap<&[u32], Vec<f64>> = HashMap::new();
    for (key, m) in marginal.cells() {
        let acc = by_agent.entry(&key[k..]).or_insert_with(|| vec![0.0; m.len()]);
        acc.iter_mut().zip(m).for_each(|(a, x)| *a += x);
    }

    let (mut informed, mut baseline, mut total) = (0.0, 0.0, 0.0);
    for (key, masses) in marginal.cells() {
        if &key[..k] != actual {
            continue;
        }
        let db = &key[k..];
        let mut cf_key = counterfactual.to_vec();
        cf_key.extend_from_slice(db);
        let informed_belief = cells
            .get(cf_key.as_slice())
            .and_then(|m| Belief::from_masses(m))
            .ok_or_else(|| {
                Error::UndefinedPosterior(format!("counterfactual {counterfactual:?} never occurs with agent cell {db:?}"))
            })?;
        let base_belief = Belief::from_masses(&by_agent[db]).expect("group cell has mass");
        let d = problem.rational_decision(&informed_belief);
        let db_decision = problem.rational_decision(&base_belief);
        for (s, m) in masses.iter().enumerate() {
            informed += m * problem.score(d, s);
            baseline += m * problem.score(db_decision, s);
            total += m;
        }
    }
    if total == 0.0 {
        return Err(Error::NoInstances(format!("realization {actual:?} has zero probability")));
    }
    Ok((informed - baseline) / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::fixtures;
    use crate::estimation::{EstimatorSpec, ModelSpec};

    fn weather_problem() -> DecisionProblem {
        DecisionProblem::matrix(&["dry", "rain"], &["none", "umbrella"], vec![vec![0.0, -100.0], vec![-50.0, 0.0]])
            .unwrap()
    }

    #[test]
    fn weather_group_gain_is_forty() {
        // group v=hot: 10 rows, 6 rainy; agent never takes an umbrella; the
        // other group keeps the agent-only posterior below 1/3
        let mut v = vec![1; 10];
        let mut y = vec![0, 0, 0, 0, 1, 1, 1, 1, 1, 1];
        v.extend(vec![0; 90]);
        y.extend((0..90).map(|i| u32::from(i < 3)));
        let n = v.len();
        let ds = Dataset::builder()
            .signal("temp", &["mild", "hot"], v)
            .unwrap()
            .agent("a", &["none"], vec![0; n])
            .unwrap()
            .state(&["dry", "rain"], y)
            .unwrap()
            .build()
            .unwrap();
        let src = EmpiricalSource::new(&ds, &ModelSpec::in_sample(EstimatorSpec::frequency(0.0))).unwrap();
        let q = IlivQuery::new(&[("temp", "hot")], &[("temp", "hot")], SignalSet::new(["a"]));
        let ev = IlivEvaluator::new(&src, &weather_problem(), &q).unwrap();
        assert!((ev.iliv_labels(&q.counterfactual).unwrap() - 40.0).abs() < 1e-9);
        // shown the other group's signal the decision maker acts like the agent
        assert!(ev.iliv(&[0]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let ds = fixtures::xor_with_agent().sample(200, 1).unwrap();
        let src = EmpiricalSource::new(&ds, &ModelSpec::in_sample(EstimatorSpec::frequency(1.0))).unwrap();
        let p = DecisionProblem::brier(0.01).unwrap();
        let bad = IlivQuery::new(&[("s2", "1")], &[("s2", "7")], SignalSet::new(["a"]));
        let ev = IlivEvaluator::new(&src, &p, &bad).unwrap();
        assert!(matches!(ev.iliv_labels(&bad.counterfactual), Err(Error::Domain(_))));
        let overlap = IlivQuery::new(&[("a", "1")], &[("a", "1")], SignalSet::new(["a"]));
        assert!(matches!(IlivEvaluator::new(&src, &p, &overlap), Err(Error::Domain(_))));

        let tiny = Dataset::builder()
            .signal("s", &["0", "1"], vec![0, 0])
            .unwrap()
            .state(&["0", "1"], vec![0, 1])
            .unwrap()
            .build()
            .unwrap();
        let src = EmpiricalSource::new(&tiny, &ModelSpec::in_sample(EstimatorSpec::frequency(1.0))).unwrap();
        let q = IlivQuery::new(&[("s", "1")], &[("s", "0")], SignalSet::empty());
        assert!(matches!(IlivEvaluator::new(&src, &p, &q), Err(Error::NoInstances(_))));
    }

    #[test]
    fn exact_iliv_maximized_at_truth() {
        let dgp = fixtures::ternary_with_agent();
        let src = ExactSource::from_dgp(&dgp).unwrap();
        let p = DecisionProblem::brier(0.01).unwrap();
        let s = SignalSet::new(["s"]);
        let a = SignalSet::new(["a"]);
        for v in 0..3 {
            let own = exact_iliv(&src, &p, &s, &[v], &[v], &a).unwrap();
            assert!(own > 0.0);
            for w in 0..3 {
                assert!(exact_iliv(&src, &p, &s, &[v], &[w], &a).unwrap() <= own + 1e-12);
            }
        }
    }

    #[test]
    fn in_sample_frequency_matches_exact_structure() {
        let dgp = fixtures::ternary_with_agent();
        let ds = dgp.sample(30_000, 8).unwrap();
        let src = EmpiricalSource::new(&ds, &ModelSpec::in_sample(EstimatorSpec::frequency(0.0))).unwrap();
        let exact = ExactSource::from_dgp(&dgp).unwrap();
        let p = DecisionProblem::brier(0.01).unwrap();
        let s = SignalSet::new(["s"]);
        let a = SignalSet::new(["a"]);
        for v in 0..3u32 {
            let ev = IlivEvaluator::from_codes(&src, &p, &s, &[v], &a).unwrap();
            let est = ev.iliv(&[v]).unwrap();
            let truth = exact_iliv(&exact, &p, &s, &[v], &[v], &a).unwrap();
            assert!((est - truth).abs() < 0.02, "v={v}: {est} vs {truth}");
        }
    }
}
