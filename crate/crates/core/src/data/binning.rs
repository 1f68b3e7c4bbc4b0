use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a numeric column is discretized before any probability computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Binning {
    EqualWidth { k: usize },
    EqualFrequency { k: usize },
    /// Full edge list `e0 < e1 < ... < ek`; values outside clamp to the end bins.
    Edges { edges: Vec<f64> },
}

impl Default for Binning {
    fn default() -> Self {
        Binning::EqualFrequency { k: 10 }
    }
}

/// Interior cut points learned from data. A value falls into bin `j` where `j`
/// is the number of cuts `<= value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bins {
    cuts: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl Bins {
    pub fn fit(binning: &Binning, values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Schema(format!("non-finite numeric value {bad}")));
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut cuts = match binning {
            Binning::EqualWidth { k } => {
                check_k(*k)?;
                let width = (hi - lo) / *k as f64;
                (1..*k).map(|j| lo + j as f64 * width).collect::<Vec<_>>()
            }
            Binning::EqualFrequency { k } => {
                check_k(*k)?;
                let mut sorted = values.to_vec();
                sorted.sort_by(f64::total_cmp);
                let n = sorted.len();
                (1..*k).map(|j| sorted[(j * n / *k).min(n - 1)]).collect()
            }
            Binning::Edges { edges } => {
                if edges.len() < 3 {
                    return Err(Error::Schema("explicit binning needs at least 3 edges".into()));
                }
                if edges.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::Schema("bin edges must be strictly ascending".into()));
                }
                return Ok(Self {
                    cuts: edges[1..edges.len() - 1].to_vec(),
                    lo: edges[0],
                    hi: edges[edges.len() - 1],
                });
            }
        };
        cuts.dedup();
        cuts.retain(|c| *c > lo);
        Ok(Self { cuts, lo, hi })
    }

    pub fn len(&self) -> usize {
        self.cuts.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn assign(&self, value: f64) -> u32 {
        self.cuts.partition_point(|c| *c <= value) as u32
    }

    pub fn labels(&self) -> Vec<String> {
        (0..self.len())
            .map(|j| {
                let a = if j == 0 { self.lo } else { self.cuts[j - 1] };
                if j + 1 == self.len() {
                    format!("[{a},{}]", self.hi)
                } else {
                    format!("[{a},{})", self.cuts[j])
                }
            })
            .collect()
    }
}

fn check_k(k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::Schema(format!("bin count must be at least 2, got {k}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_width() {
        let vals: Vec<f64> = (0..=10).map(f64::from).collect();
        let bins = Bins::fit(&Binning::EqualWidth { k: 2 }, &vals).unwrap();
        assert_eq!(bins.cuts(), &[5.0]);
        assert_eq!(bins.assign(4.9), 0);
        assert_eq!(bins.assign(5.0), 1);
        assert_eq!(bins.assign(10.0), 1);
    }

    #[test]
    fn equal_frequency_dedups_ties() {
        let vals = [1.0, 1.0, 1.0, 1.0, 2.0, 3.0];
        let bins = Bins::fit(&Binning::EqualFrequency { k: 3 }, &vals).unwrap();
        // quantile cuts 1.0 (dropped: not above min) and 2.0
        assert_eq!(bins.cuts(), &[2.0]);
        assert_eq!(bins.len(), 2);
    }

    #[test]
    fn k_below_two_rejected() {
        assert!(Bins::fit(&Binning::EqualWidth { k: 1 }, &[1.0, 2.0]).is_err());
        assert!(Bins::fit(&Binning::Edges { edges: vec![0.0, 1.0] }, &[0.5]).is_err());
    }
}
