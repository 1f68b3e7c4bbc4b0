use std::collections::BTreeMap;

use super::Dataset;
use crate::decision::Belief;
use crate::error::{Error, Result};

/// Finite joint distribution over a tuple of discrete columns and the state.
///
/// Cells are keyed by the column codes; each key holds one mass per state.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    columns: Vec<String>,
    cardinalities: Vec<usize>,
    num_states: usize,
    cells: BTreeMap<Vec<u32>, Vec<f64>>,
}

impl JointDistribution {
    /// Builds from unnormalized non-negative masses; zero-mass keys are dropped.
    pub fn from_masses(
        columns: Vec<String>,
        cardinalities: Vec<usize>,
        num_states: usize,
        cells: BTreeMap<Vec<u32>, Vec<f64>>,
    ) -> Result<Self> {
        if columns.len() != cardinalities.len() {
            return Err(Error::Schema("column/cardinality length mismatch".into()));
        }
        let total: f64 = cells.values().flatten().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Domain("joint distribution has no mass".into()));
        }
        let mut normalized = BTreeMap::new();
        for (key, masses) in cells {
            if key.len() != columns.len() || masses.len() != num_states {
                return Err(Error::Schema("joint cell has the wrong arity".into()));
            }
            if masses.iter().any(|m| *m < 0.0) {
                return Err(Error::Domain("negative probability mass".into()));
            }
            if masses.iter().any(|m| *m > 0.0) {
                normalized.insert(key, masses.iter().map(|m| m / total).collect());
            }
        }
        Ok(Self { columns, cardinalities, num_states, cells: normalized })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Schema(format!("unknown column {name:?}")))
    }

    /// Iterates `(key, per-state masses)`.
    pub fn cells(&self) -> impl Iterator<Item = (&Vec<u32>, &Vec<f64>)> {
        self.cells.iter()
    }

    /// Flat support: `(key, state, mass)` for every positive-mass cell.
    pub fn support(&self) -> Vec<(Vec<u32>, usize, f64)> {
        let mut out = Vec::new();
        for (key, masses) in &self.cells {
            for (s, m) in masses.iter().enumerate() {
                if *m > 0.0 {
                    out.push((key.clone(), s, *m));
                }
            }
        }
        out
    }

    pub fn state_marginal(&self) -> Belief {
        let mut masses = vec![0.0; self.num_states];
        for m in self.cells.values() {
            for (acc, x) in masses.iter_mut().zip(m) {
                *acc += x;
            }
        }
        Belief::from_masses(&masses).expect("joint has positive mass")
    }

    /// Marginal over the columns at positions `keep` (in the given order).
    pub fn marginalize(&self, keep: &[usize]) -> Self {
        let mut cells: BTreeMap<Vec<u32>, Vec<f64>> = BTreeMap::new();
        for (key, masses) in &self.cells {
            let sub: Vec<u32> = keep.iter().map(|&k| key[k]).collect();
            let acc = cells.entry(sub).or_insert_with(|| vec![0.0; self.num_states]);
            for (a, m) in acc.iter_mut().zip(masses) {
                *a += m;
            }
        }
        Self {
            columns: keep.iter().map(|&k| self.columns[k].clone()).collect(),
            cardinalities: keep.iter().map(|&k| self.cardinalities[k]).collect(),
            num_states: self.num_states,
            cells,
        }
    }

    /// `P(ω | columns[cols] = values)`.
    pub fn posterior(&self, cols: &[usize], values: &[u32]) -> Result<Belief> {
        if cols.len() != values.len() {
            return Err(Error::Schema("conditioning arity mismatch".into()));
        }
        for (&c, &v) in cols.iter().zip(values) {
            if c >= self.columns.len() {
                return Err(Error::Schema(format!("column position {c} out of range")));
            }
            if v as usize >= self.cardinalities[c] {
                return Err(Error::Domain(format!(
                    "value {v} outside the domain of {:?}",
                    self.columns[c]
                )));
            }
        }
        let mut masses = vec![0.0; self.num_states];
        for (key, m) in &self.cells {
            if cols.iter().zip(values).all(|(&c, &v)| key[c] == v) {
                for (a, x) in masses.iter_mut().zip(m) {
                    *a += x;
                }
            }
        }
        Belief::from_masses(&masses).ok_or_else(|| {
            let cond: Vec<String> = cols
                .iter()
                .zip(values)
                .map(|(&c, v)| format!("{}={v}", self.columns[c]))
                .collect();
            Error::UndefinedPosterior(format!("zero probability for {}", cond.join(", ")))
        })
    }

    /// Total-variation distance to a distribution over the same columns.
    pub fn total_variation(&self, other: &Self) -> Result<f64> {
        if self.columns != other.columns || self.num_states != other.num_states {
            return Err(Error::Schema("distributions are over different columns".into()));
        }
        let zeros = vec![0.0; self.num_states];
        let mut sum = 0.0;
        for (key, a) in &self.cells {
            let b = other.cells.get(key).unwrap_or(&zeros);
            sum += a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
        }
        for (key, b) in &other.cells {
            if !self.cells.contains_key(key) {
                sum += b.iter().sum::<f64>();
            }
        }
        Ok(0.5 * sum)
    }
}

/// Empirical (weighted) joint of the named columns and the state. An empty
/// column list gives the state marginal.
pub fn empirical_joint<S: AsRef<str>>(ds: &Dataset, cols: &[S]) -> Result<JointDistribution> {
    let idx = cols
        .iter()
        .map(|c| ds.column_index(c.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let mut cells: BTreeMap<Vec<u32>, Vec<f64>> = BTreeMap::new();
    for row in 0..ds.n_rows() {
        let w = ds.weight(row);
        if w == 0.0 {
            continue;
        }
        let acc = cells.entry(ds.cell(row, &idx)).or_insert_with(|| vec![0.0; ds.num_states()]);
        acc[ds.state(row)] += w;
    }
    JointDistribution::from_masses(
        idx.iter().map(|&c| ds.column(c).name().to_string()).collect(),
        idx.iter().map(|&c| ds.column(c).cardinality()).collect(),
        ds.num_states(),
        cells,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(values: &[&str], states: &[u32], weights: Option<Vec<f64>>) -> Dataset {
        let col = crate::data::Column::from_values("v", crate::data::Role::Signal, values).unwrap();
        let mut b = Dataset::builder().column(col).state(&["0", "1"], states.to_vec()).unwrap();
        if let Some(w) = weights {
            b = b.weights(w);
        }
        b.build().unwrap()
    }

    #[test]
    fn prior_from_empty_selection() {
        let d = ds(&["a", "a", "b", "b"], &[0, 0, 1, 1], None);
        let j = empirical_joint::<&str>(&d, &[]).unwrap();
        assert_eq!(j.state_marginal().probs(), &[0.5, 0.5]);
    }

    #[test]
    fn counting_posterior() {
        let d = ds(&["a", "a", "a", "a"], &[0, 0, 0, 1], None);
        let j = empirical_joint(&d, &["v"]).unwrap();
        assert_eq!(j.posterior(&[0], &[0]).unwrap().p1(), 0.25);
    }

    #[test]
    fn weighted_posterior() {
        let d = ds(&["a", "a"], &[0, 1], Some(vec![1.0, 3.0]));
        let j = empirical_joint(&d, &["v"]).unwrap();
        assert_eq!(j.posterior(&[0], &[0]).unwrap().p1(), 0.75);
    }

    #[test]
    fn unknown_column() {
        let d = ds(&["a"], &[0], None);
        assert!(matches!(empirical_joint(&d, &["nope"]), Err(Error::Schema(_))));
    }

    #[test]
    fn tv_distance_self_is_zero() {
        let d = ds(&["a", "b", "b"], &[0, 1, 0], None);
        let j = empirical_joint(&d, &["v"]).unwrap();
        assert_eq!(j.total_variation(&j).unwrap(), 0.0);
    }
}
