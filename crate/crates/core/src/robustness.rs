//! Blackwell-order testing over the V-shaped scoring rules: payoff and ACIV
//! curves across kinks `μ`, and pairwise dominance verdicts.
//!
//! Dominance is checked on a finite grid only. A verdict says the ordering
//! holds at every grid point, which is necessary but not sufficient for the
//! Blackwell order over all `μ ∈ (0,1)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decision::DecisionProblem;
use crate::error::{Error, Result};
use crate::infovalue::{bootstrap_many, BootstrapSpec, EmpiricalSource, Interval, PosteriorSource, PosteriorTable, Quantity, SignalSet};

/// Tolerance used by [`dominance`] when no bootstrap intervals are available.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Differences this small are rounding noise and always count as ties, so
/// a zero tolerance still compares equal curves as equal.
pub const ROUNDING_FLOOR: f64 = 1e-12;

/// Ascending kinks strictly inside `(0,1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MuGrid(Vec<f64>);

impl MuGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("μ grid is empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(Error::Domain(format!("μ grid value {v} is not inside (0,1)")));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("μ grid must be strictly ascending".into()));
        }
        Ok(Self(values))
    }

    /// `step, 2·step, …` up to the last point below 1.
    pub fn with_step(step: f64) -> Result<Self> {
        if !(step > 0.0 && step < 1.0) {
            return Err(Error::Domain(format!("μ grid step must lie in (0,1), got {step}")));
        }
        let values = (1..)
            .map(|k| (k as f64 * step * 1e9).round() / 1e9)
            .take_while(|v| *v < 1.0 - 1e-9)
            .collect();
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for MuGrid {
    fn default() -> Self {
        Self::with_step(0.01).expect("0.01 is a valid step")
    }
}

impl TryFrom<Vec<f64>> for MuGrid {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<MuGrid> for Vec<f64> {
    fn from(g: MuGrid) -> Self {
        g.0
    }
}

/// One candidate signal set's curve over the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSeries {
    pub signals: SignalSet,
    pub values: Vec<f64>,
    pub intervals: Option<Vec<Interval>>,
}

/// `R^{S_μ}(V)` (no agent) or `ACIV^{S_μ}(V; Db)` for each candidate set,
/// aligned with `mu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub quantity: Quantity,
    pub agent: Option<SignalSet>,
    pub mu: Vec<f64>,
    pub series: Vec<SweepSeries>,
    /// `R^{S_μ}(Db)` when an agent is given.
    pub baseline: Option<Vec<f64>>,
}

impl SweepResult {
    pub fn position(&self, signals: &SignalSet) -> Option<usize> {
        self.series.iter().position(|s| &s.signals == signals)
    }
}

fn problems(grid: &MuGrid) -> Result<Vec<DecisionProblem>> {
    grid.values().iter().map(|&mu| DecisionProblem::v_shaped(mu, 1.0)).collect()
}

fn curves(tables: &[PosteriorTable], base: Option<&PosteriorTable>, problems: &[DecisionProblem]) -> Result<(Vec<Vec<f64>>, Option<Vec<f64>>)> {
    let per_mu: Vec<(Vec<f64>, Option<f64>)> = problems
        .par_iter()
        .map(|p| {
            let b = base.map(|t| t.payoff(p)).transpose()?;
            let values = tables
                .iter()
                .map(|t| Ok(t.payoff(p)? - b.unwrap_or(0.0)))
                .collect::<Result<Vec<f64>>>()?;
            Ok((values, b))
        })
        .collect::<Result<_>>()?;
    let values = (0..tables.len()).map(|i| per_mu.iter().map(|(v, _)| v[i]).collect()).collect();
    let baseline = base.map(|_| per_mu.iter().map(|(_, b)| b.expect("baseline computed")).collect());
    Ok((values, baseline))
}

fn tables<S: PosteriorSource + ?Sized>(
    source: &S,
    sets: &[SignalSet],
    agent: Option<&SignalSet>,
) -> Result<(Vec<PosteriorTable>, Option<PosteriorTable>)> {
    let tables = sets
        .iter()
        .map(|s| source.table(&agent.map_or_else(|| s.clone(), |a| s.union(a))))
        .collect::<Result<_>>()?;
    let base = agent.map(|a| source.table(a)).transpose()?;
    Ok((tables, base))
}

fn check_inputs<S: PosteriorSource + ?Sized>(source: &S, sets: &[SignalSet]) -> Result<()> {
    if source.num_states() != 2 {
        return Err(Error::Unsupported(format!(
            "V-shaped scoring rules need binary states, found {}",
            source.num_states()
        )));
    }
    if sets.is_empty() {
        return Err(Error::Domain("sweep needs at least one signal set".into()));
    }
    Ok(())
}

/// Evaluates every candidate set under `S_μ` for each `μ` on the grid. Each
/// posterior table is built once and reused across the grid.
pub fn sweep<S: PosteriorSource + ?Sized>(
    source: &S,
    sets: &[SignalSet],
    agent: Option<&SignalSet>,
    grid: &MuGrid,
) -> Result<SweepResult> {
    check_inputs(source, sets)?;
    let problems = problems(grid)?;
    let (tables, base) = tables(source, sets, agent)?;
    let (values, baseline) = curves(&tables, base.as_ref(), &problems)?;
    Ok(SweepResult {
        quantity: if agent.is_some() { Quantity::Aciv } else { Quantity::RationalPayoff },
        agent: agent.cloned(),
        mu: grid.values().to_vec(),
        series: sets
            .iter()
            .zip(values)
            .map(|(s, values)| SweepSeries { signals: s.clone(), values, intervals: None })
            .collect(),
        baseline,
    })
}

/// [`sweep`] with a bootstrap interval at every grid point. Each resample
/// refits every set once and evaluates the whole grid.
pub fn sweep_with_bootstrap(
    source: &EmpiricalSource,
    sets: &[SignalSet],
    agent: Option<&SignalSet>,
    grid: &MuGrid,
    spec: &BootstrapSpec,
) -> Result<SweepResult> {
    let mut result = sweep(source, sets, agent, grid)?;
    let problems = problems(grid)?;
    let m = grid.len();
    let intervals = bootstrap_many(source, spec, sets.len() * m, |s| {
        let (tables, base) = tables(s, sets, agent)?;
        let (values, _) = curves(&tables, base.as_ref(), &problems)?;
        Ok(values.concat())
    })?;
    for (series, chunk) in result.series.iter_mut().zip(intervals.chunks(m)) {
        series.intervals = Some(chunk.to_vec());
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    FirstDominates,
    SecondDominates,
    Incomparable,
}

impl Verdict {
    fn flip(self) -> Self {
        match self {
            Self::FirstDominates => Self::SecondDominates,
            Self::SecondDominates => Self::FirstDominates,
            Self::Incomparable => Self::Incomparable,
        }
    }
}

/// Grid-resolution comparison of two curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceVerdict {
    pub first: SignalSet,
    pub second: SignalSet,
    pub verdict: Verdict,
    /// No grid point separates the two curves beyond the tolerance.
    pub equivalent: bool,
    /// `first − second` at each grid point.
    pub difference: Vec<f64>,
    /// `+1`, `−1` or `0` per grid point: the sign of the difference once
    /// values within the tolerance are treated as ties.
    pub signs: Vec<i8>,
    pub tolerance: Vec<f64>,
    pub grid_points: usize,
}

fn default_tolerance(a: &SweepSeries, b: &SweepSeries) -> Vec<f64> {
    match (&a.intervals, &b.intervals) {
        (Some(ia), Some(ib)) => ia
            .iter()
            .zip(ib)
            .map(|(x, y)| 2.0 * x.standard_error.hypot(y.standard_error))
            .collect(),
        _ => vec![DEFAULT_TOLERANCE; a.values.len()],
    }
}

fn compare(sweep: &SweepResult, i: usize, j: usize, epsilon: Option<f64>) -> Result<DominanceVerdict> {
    let (a, b) = (&sweep.series[i], &sweep.series[j]);
    let tolerance = match epsilon {
        Some(e) if e >= 0.0 => vec![e; a.values.len()],
        Some(e) => return Err(Error::Domain(format!("tolerance must be non-negative, got {e}"))),
        None => default_tolerance(a, b),
    };
    let difference: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
    let signs: Vec<i8> = difference
        .iter()
        .zip(&tolerance)
        .map(|(d, e)| {
            let e = e.max(ROUNDING_FLOOR);
            if *d > e {
                1
            } else if *d < -e {
                -1
            } else {
                0
            }
        })
        .collect();
    let up = signs.contains(&1);
    let down = signs.contains(&-1);
    let verdict = match (up, down) {
        (true, false) => Verdict::FirstDominates,
        (false, true) => Verdict::SecondDominates,
        _ => Verdict::Incomparable,
    };
    Ok(DominanceVerdict {
        first: a.signals.clone(),
        second: b.signals.clone(),
        verdict,
        equivalent: !up && !down,
        difference,
        signs,
        tolerance,
        grid_points: sweep.mu.len(),
    })
}

/// Compares two sets from a sweep. `epsilon = None` uses twice the bootstrap
/// standard error of the difference at each `μ` when intervals are present,
/// [`DEFAULT_TOLERANCE`] otherwise.
pub fn dominance(sweep: &SweepResult, first: &SignalSet, second: &SignalSet, epsilon: Option<f64>) -> Result<DominanceVerdict> {
    let find = |s: &SignalSet| sweep.position(s).ok_or_else(|| Error::Domain(format!("signal set {s} is not in the sweep")));
    compare(sweep, find(first)?, find(second)?, epsilon)
}

/// Every pairwise verdict; entry `(i, j)` compares row set `i` with column set `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceMatrix {
    pub sets: Vec<SignalSet>,
    pub entries: Vec<Vec<DominanceVerdict>>,
}

impl DominanceMatrix {
    pub fn verdict(&self, i: usize, j: usize) -> Verdict {
        self.entries[i][j].verdict
    }

    /// Sets ordered from most to least informative when every distinct pair
    /// is strictly ordered and the order is transitive.
    pub fn total_order(&self) -> Option<Vec<SignalSet>> {
        let n = self.sets.len();
        let wins: Vec<usize> = (0..n)
            .map(|i| (0..n).filter(|&j| self.verdict(i, j) == Verdict::FirstDominates).count())
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|a, b| wins[*b].cmp(&wins[*a]));
        let consistent = order
            .iter()
            .enumerate()
            .all(|(r, &i)| order[r + 1..].iter().all(|&j| self.verdict(i, j) == Verdict::FirstDominates));
        consistent.then(|| order.iter().map(|&i| self.sets[i].clone()).collect())
    }

    /// Whether `i ≻ j` and `j ≻ k` always imply `i ≻ k`.
    pub fn is_transitive(&self) -> bool {
        let n = self.sets.len();
        let dom = |i: usize, j: usize| self.verdict(i, j) == Verdict::FirstDominates;
        (0..n).all(|i| (0..n).all(|j| !dom(i, j) || (0..n).all(|k| !dom(j, k) || dom(i, k))))
    }
}

pub fn dominance_matrix(sweep: &SweepResult, epsilon: Option<f64>) -> Result<DominanceMatrix> {
    let n = sweep.series.len();
    let mut entries: Vec<Vec<Option<DominanceVerdict>>> = vec![vec![None; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = compare(sweep, i, j, epsilon)?;
            if i != j {
                let mut mirror = compare(sweep, j, i, epsilon)?;
                mirror.verdict = v.verdict.flip();
                entries[j][i] = Some(mirror);
            }
            entries[i][j] = Some(v);
        }
    }
    Ok(DominanceMatrix {
        sets: sweep.series.iter().map(|s| s.signals.clone()).collect(),
        entries: entries.into_iter().map(|row| row.into_iter().map(|e| e.expect("filled")).collect()).collect(),
    })
}
