//! Tabular data: discretized columns, datasets with optional row weights,
//! CSV ingestion and empirical joint distributions.
//!
//! Every signal and agent-decision column is stored as small integer codes
//! into a label table. Numeric columns are binned at construction and keep a
//! per-bin representative value (the mean of the raw values in the bin).

mod binning;
mod ingest;
mod joint;

pub use binning::{Binning, Bins};
pub use ingest::{load_csv, load_csv_reader, write_csv, ColumnConfig, ColumnKind, Ingested, Schema};
pub use joint::{empirical_joint, JointDistribution};

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::decision::{Belief, Grid, StateSpace};
use crate::error::{Error, Result};

/// What a CSV column means to the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Signal,
    Agent,
    State,
    Weight,
    /// Externally produced prediction `P(ω = 1)`, kept as raw numbers.
    Score,
    Ignore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    name: String,
    role: Role,
    labels: Vec<String>,
    codes: Vec<u32>,
    /// Numeric value per code; NaN where a label is not numeric.
    repr: Vec<f64>,
    numeric: bool,
    bins: Option<Bins>,
}

impl Column {
    /// Categorical column from codes into `labels`.
    pub fn categorical(name: &str, role: Role, labels: Vec<String>, codes: Vec<u32>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Schema(format!("column {name:?} has no values")));
        }
        if let Some(c) = codes.iter().find(|c| **c as usize >= labels.len()) {
            return Err(Error::Schema(format!("column {name:?}: code {c} out of range")));
        }
        let repr = labels.iter().map(|l| l.parse::<f64>().unwrap_or(f64::NAN)).collect();
        Ok(Self { name: name.into(), role, labels, codes, repr, numeric: false, bins: None })
    }

    /// Categorical column from raw string values. Labels are the distinct
    /// values in natural order (numeric order when every value parses).
    pub fn from_values<S: AsRef<str>>(name: &str, role: Role, values: &[S]) -> Result<Self> {
        let labels = natural_labels(values.iter().map(|v| v.as_ref()));
        Self::from_values_with_labels(name, role, values, labels)
    }

    pub fn from_values_with_labels<S: AsRef<str>>(
        name: &str,
        role: Role,
        values: &[S],
        labels: Vec<String>,
    ) -> Result<Self> {
        let index: HashMap<&str, u32> =
            labels.iter().enumerate().map(|(i, l)| (l.as_str(), i as u32)).collect();
        let codes = values
            .iter()
            .enumerate()
            .map(|(row, v)| {
                index.get(v.as_ref()).copied().ok_or_else(|| {
                    Error::Schema(format!(
                        "column {name:?} row {row}: value {:?} not among declared values",
                        v.as_ref()
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::categorical(name, role, labels, codes)
    }

    /// Numeric column discretized by `binning`.
    pub fn numeric(name: &str, role: Role, values: &[f64], binning: &Binning) -> Result<Self> {
        let bins = Bins::fit(binning, values)?;
        let codes: Vec<u32> = values.iter().map(|v| bins.assign(*v)).collect();
        let mut sums = vec![0.0; bins.len()];
        let mut counts = vec![0usize; bins.len()];
        for (v, c) in values.iter().zip(&codes) {
            sums[*c as usize] += v;
            counts[*c as usize] += 1;
        }
        let cuts = bins.cuts();
        let repr = (0..bins.len())
            .map(|j| {
                if counts[j] > 0 {
                    sums[j] / counts[j] as f64
                } else if j == 0 {
                    cuts.first().copied().unwrap_or(0.0)
                } else {
                    cuts[j - 1]
                }
            })
            .collect();
        Ok(Self {
            name: name.into(),
            role,
            labels: bins.labels(),
            codes,
            repr,
            numeric: true,
            bins: Some(bins),
        })
    }

    /// Numeric column whose values snap to the nearest point of `grid`; the
    /// representative of each code is the grid point itself.
    pub fn grid(name: &str, role: Role, grid: &Grid, values: &[f64]) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("column {name:?}: non-finite value {v}")));
        }
        Ok(Self {
            name: name.into(),
            role,
            labels: grid.labels(),
            codes: values.iter().map(|v| grid.nearest(*v) as u32).collect(),
            repr: grid.points(),
            numeric: true,
            bins: None,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn cardinality(&self) -> usize {
        self.labels.len()
    }

    pub fn codes(&self) -> &[u32] {
        &self.codes
    }

    pub fn is_numeric(&self) -> bool {
        self.numeric
    }

    /// Numeric representative of each code (bin mean for numeric columns).
    pub fn representatives(&self) -> &[f64] {
        &self.repr
    }

    pub fn bins(&self) -> Option<&Bins> {
        self.bins.as_ref()
    }

    pub fn code_of(&self, label: &str) -> Option<u32> {
        self.labels.iter().position(|l| l == label).map(|i| i as u32)
    }
}

/// Distinct values in natural order.
pub(crate) fn natural_labels<'a>(values: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut distinct: Vec<String> = {
        let mut seen = std::collections::BTreeSet::new();
        for v in values {
            seen.insert(v);
        }
        seen.into_iter().map(String::from).collect()
    };
    let parsed: Option<Vec<f64>> = distinct.iter().map(|l| l.parse::<f64>().ok()).collect();
    if let Some(nums) = parsed {
        let mut pairs: Vec<(f64, String)> = nums.into_iter().zip(distinct).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        distinct = pairs.into_iter().map(|(_, l)| l).collect();
    }
    distinct
}

#[derive(Debug)]
struct Inner {
    columns: Vec<Column>,
    state: Column,
    states: StateSpace,
    scores: Vec<(String, Vec<f64>)>,
    index: HashMap<String, usize>,
}

/// Signal and agent-decision columns, a state column, and per-row weights.
///
/// Cloning is cheap; [`Dataset::reweighted`] shares the column storage.
#[derive(Debug, Clone)]
pub struct Dataset {
    inner: Arc<Inner>,
    weights: Arc<Vec<f64>>,
}

impl Dataset {
    pub fn builder() -> DatasetBuilder {
        DatasetBuilder::default()
    }

    pub fn n_rows(&self) -> usize {
        self.weights.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.inner.columns
    }

    pub fn column(&self, idx: usize) -> &Column {
        &self.inner.columns[idx]
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.inner
            .index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Schema(format!("unknown column {name:?}")))
    }

    pub fn column_by_name(&self, name: &str) -> Result<&Column> {
        Ok(self.column(self.column_index(name)?))
    }

    /// Resolves names to a sorted, de-duplicated index set.
    pub fn resolve<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<usize>> {
        let mut out = names
            .iter()
            .map(|n| self.column_index(n.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    pub fn names(&self, cols: &[usize]) -> Vec<String> {
        cols.iter().map(|&c| self.column(c).name.clone()).collect()
    }

    pub fn state_column(&self) -> &Column {
        &self.inner.state
    }

    pub fn states(&self) -> &StateSpace {
        &self.inner.states
    }

    pub fn num_states(&self) -> usize {
        self.inner.states.len()
    }

    #[inline]
    pub fn state(&self, row: usize) -> usize {
        self.inner.state.codes[row] as usize
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn weight(&self, row: usize) -> f64 {
        self.weights[row]
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn score(&self, name: &str) -> Result<&[f64]> {
        self.inner
            .scores
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::Schema(format!("unknown score column {name:?}")))
    }

    /// Codes of row `row` restricted to `cols`.
    pub fn cell(&self, row: usize, cols: &[usize]) -> Vec<u32> {
        cols.iter().map(|&c| self.inner.columns[c].codes[row]).collect()
    }

    /// Weighted marginal distribution of the state.
    pub fn prior(&self) -> Result<Belief> {
        let mut masses = vec![0.0; self.num_states()];
        for row in 0..self.n_rows() {
            masses[self.state(row)] += self.weight(row);
        }
        Belief::from_masses(&masses).ok_or(Error::EmptyDataset)
    }

    /// Same rows and weights plus one more signal or agent column.
    pub fn with_column(&self, column: Column) -> Result<Self> {
        let mut builder = Dataset::builder().state_column(self.inner.state.clone());
        for c in self.columns().iter().cloned().chain(std::iter::once(column)) {
            builder = builder.column(c);
        }
        for (name, values) in &self.inner.scores {
            builder = builder.score(name, values.clone());
        }
        let mut out = builder.build()?;
        out.weights = Arc::clone(&self.weights);
        Ok(out)
    }

    /// Same rows with different weights. Zero weights are allowed here (they
    /// drop a row, as in bootstrap resampling); negative ones are not.
    pub fn reweighted(&self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.n_rows() {
            return Err(Error::Schema(format!(
                "{} weights for {} rows",
                weights.len(),
                self.n_rows()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Domain("weights must be finite and non-negative".into()));
        }
        if !(weights.iter().sum::<f64>() > 0.0) {
            return Err(Error::EmptyDataset);
        }
        Ok(Self { inner: Arc::clone(&self.inner), weights: Arc::new(weights) })
    }
}

#[derive(Debug, Default)]
pub struct DatasetBuilder {
    columns: Vec<Column>,
    state: Option<Column>,
    scores: Vec<(String, Vec<f64>)>,
    weights: Option<Vec<f64>>,
}

impl DatasetBuilder {
    pub fn column(mut self, column: Column) -> Self {
        self.columns.push(column);
        self
    }

    pub fn signal(self, name: &str, labels: &[&str], codes: Vec<u32>) -> Result<Self> {
        let labels = labels.iter().map(|s| s.to_string()).collect();
        Ok(self.column(Column::categorical(name, Role::Signal, labels, codes)?))
    }

    pub fn agent(self, name: &str, labels: &[&str], codes: Vec<u32>) -> Result<Self> {
        let labels = labels.iter().map(|s| s.to_string()).collect();
        Ok(self.column(Column::categorical(name, Role::Agent, labels, codes)?))
    }

    pub fn state(mut self, labels: &[&str], codes: Vec<u32>) -> Result<Self> {
        let labels = labels.iter().map(|s| s.to_string()).collect();
        self.state = Some(Column::categorical("state", Role::State, labels, codes)?);
        Ok(self)
    }

    pub fn state_column(mut self, column: Column) -> Self {
        self.state = Some(column);
        self
    }

    pub fn score(mut self, name: &str, values: Vec<f64>) -> Self {
        self.scores.push((name.into(), values));
        self
    }

    pub fn weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = Some(weights);
        self
    }

    pub fn build(self) -> Result<Dataset> {
        let state = self.state.ok_or_else(|| Error::Schema("missing state column".into()))?;
        let n = state.codes.len();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let states = StateSpace::new(state.labels.clone())?;
        let mut index = HashMap::new();
        for (i, c) in self.columns.iter().enumerate() {
            if c.codes.len() != n {
                return Err(Error::Schema(format!(
                    "column {:?} has {} rows, state has {n}",
                    c.name,
                    c.codes.len()
                )));
            }
            if !matches!(c.role, Role::Signal | Role::Agent) {
                return Err(Error::Schema(format!("column {:?} is not a signal or agent", c.name)));
            }
            if index.insert(c.name.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate column {:?}", c.name)));
            }
        }
        for (name, values) in &self.scores {
            if values.len() != n {
                return Err(Error::Schema(format!("score column {name:?} has wrong length")));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Schema(format!("score column {name:?} has non-finite values")));
            }
        }
        let weights = self.weights.unwrap_or_else(|| vec![1.0; n]);
        if weights.len() != n {
            return Err(Error::Schema("weight column has wrong length".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Domain("weights must be positive".into()));
        }
        Ok(Dataset {
            inner: Arc::new(Inner {
                columns: self.columns,
                state,
                states,
                scores: self.scores,
                index,
            }),
            weights: Arc::new(weights),
        })
    }
}
