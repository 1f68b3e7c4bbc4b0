use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EmpiricalSource;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSpec {
    pub resamples: usize,
    pub seed: u64,
}

/// Percentile interval over row resamples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub standard_error: f64,
    pub resamples: usize,
    pub seed: u64,
    /// Resamples on which the quantity was undefined (e.g. an empty instance group).
    pub failed: usize,
}

/// Linear-interpolation percentile of sorted values, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Multiplicity of each row in resample `b`.
fn resample_counts(n: usize, seed: u64, b: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b as u64);
    let mut counts = vec![0.0; n];
    for _ in 0..n {
        counts[rng.gen_range(0..n)] += 1.0;
    }
    counts
}

/// 2.5/97.5 percentile interval of `quantity` over `spec.resamples` row
/// resamples drawn with replacement. Each resample has its own random stream
/// and the reduction runs in resample order, so results are reproducible
/// regardless of thread count.
pub fn bootstrap<F>(source: &EmpiricalSource, spec: &BootstrapSpec, quantity: F) -> Result<Interval>
where
    F: Fn(&EmpiricalSource) -> Result<f64> + Sync,
{
    let mut out = bootstrap_many(source, spec, 1, |s| quantity(s).map(|v| vec![v]))?;
    Ok(out.remove(0))
}

/// [`bootstrap`] for a quantity with `len` components computed together;
/// one interval per component.
pub fn bootstrap_many<F>(source: &EmpiricalSource, spec: &BootstrapSpec, len: usize, quantity: F) -> Result<Vec<Interval>>
where
    F: Fn(&EmpiricalSource) -> Result<Vec<f64>> + Sync,
{
    if spec.resamples == 0 {
        return Err(Error::Domain("bootstrap needs at least one resample".into()));
    }
    let base = source.dataset().weights();
    let n = base.len();
    let outcomes: Vec<Option<Vec<f64>>> = (0..spec.resamples)
        .into_par_iter()
        .map(|b| {
            let weights: Vec<f64> =
                resample_counts(n, spec.seed, b).iter().zip(base).map(|(c, w)| c * w).collect();
            match source.reweighted(weights).and_then(|s| quantity(&s)) {
                Ok(v) if v.len() == len => Ok(Some(v)),
                Ok(v) => Err(Error::Numeric(format!("bootstrap quantity has {} components, expected {len}", v.len()))),
                Err(Error::NoInstances(_) | Error::UndefinedPosterior(_) | Error::EmptyDataset) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let ok: Vec<&Vec<f64>> = outcomes.iter().flatten().collect();
    let failed = outcomes.len() - ok.len();
    if ok.is_empty() {
        return Err(Error::Numeric("the quantity is undefined on every bootstrap resample".into()));
    }
    (0..len)
        .map(|k| {
            let mut values: Vec<f64> = ok.iter().map(|v| v[k]).collect();
            if let Some(v) = values.iter().find(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("bootstrap produced a non-finite value {v}")));
            }
            values.sort_by(f64::total_cmp);
            let m = values.len() as f64;
            let mean = values.iter().sum::<f64>() / m;
            let standard_error = if values.len() > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
            } else {
                0.0
            };
            Ok(Interval {
                lo: percentile(&values, 0.025),
                hi: percentile(&values, 0.975),
                standard_error,
                resamples: spec.resamples,
                seed: spec.seed,
                failed,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::fixtures;
    use crate::estimation::{EstimatorSpec, ModelSpec};
    use crate::infovalue::{PosteriorSource, SignalSet};

    fn source() -> EmpiricalSource {
        let ds = fixtures::bsc(0.5, 0.2).sample(500, 2).unwrap();
        EmpiricalSource::new(&ds, &ModelSpec::in_sample(EstimatorSpec::frequency(1.0))).unwrap()
    }

    #[test]
    fn percentiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 0.5), 3.0);
        assert_eq!(percentile(&v, 0.975), 4.9);
        assert_eq!(percentile(&[7.0], 0.025), 7.0);
    }

    #[test]
    fn constant_quantity_degenerates() {
        let spec = BootstrapSpec { resamples: 20, seed: 1 };
        let i = bootstrap(&source(), &spec, |_| Ok(3.5)).unwrap();
        assert_eq!((i.lo, i.hi, i.standard_error), (3.5, 3.5, 0.0));
    }

    #[test]
    fn single_resample_is_its_value() {
        let src = source();
        let spec = BootstrapSpec { resamples: 1, seed: 4 };
        let p = crate::decision::DecisionProblem::brier(0.01).unwrap();
        let i = bootstrap(&src, &spec, |s| s.payoff(&p, &SignalSet::new(["s"]))).unwrap();
        assert_eq!(i.lo, i.hi);
    }

    #[test]
    fn deterministic_per_seed() {
        let src = source();
        let p = crate::decision::DecisionProblem::brier(0.01).unwrap();
        let spec = BootstrapSpec { resamples: 30, seed: 9 };
        let f = |s: &EmpiricalSource| s.payoff(&p, &SignalSet::new(["s"]));
        let a = bootstrap(&src, &spec, f).unwrap();
        let b = bootstrap(&src, &spec, f).unwrap();
        assert_eq!(a, b);
        assert!(a.lo < a.hi);
    }
}
