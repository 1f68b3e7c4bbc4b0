//! Posterior estimators (the learned stand-ins for the rational decision
//! maker's belief), cross-fitting, and calibration diagnostics.

mod calibration;
mod frequency;
mod glm;

pub use calibration::{
    ece, ece_by_level, regret_bound_check, reliability, swap_regret, BinStat, CalibrationReport,
    DEFAULT_ECE_BINS,
};
pub use frequency::FrequencyModel;
pub use glm::GlmModel;

use std::collections::HashMap;
use std::fmt::Debug;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::decision::Belief;
use crate::error::{Error, Result};

/// A conditional distribution over states given a realization of its
/// conditioning columns (codes in the column order it was fitted with).
///
/// Implementations must return a normalized belief for every in-domain
/// realization, including ones never seen in training.
pub trait PosteriorModel: Send + Sync + Debug {
    fn num_states(&self) -> usize;
    fn predict(&self, cell: &[u32]) -> Belief;
    fn description(&self) -> String;
}

pub const DEFAULT_SMOOTHING: f64 = 1.0;
pub const DEFAULT_FOLDS: usize = 5;

fn default_smoothing() -> f64 {
    DEFAULT_SMOOTHING
}

fn default_epochs() -> usize {
    500
}

fn default_learning_rate() -> f64 {
    0.5
}

fn default_folds() -> usize {
    DEFAULT_FOLDS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EstimatorSpec {
    Frequency {
        #[serde(default = "default_smoothing")]
        smoothing: f64,
    },
    Glm {
        #[serde(default = "default_epochs")]
        epochs: usize,
        #[serde(default = "default_learning_rate")]
        learning_rate: f64,
        seed: u64,
    },
}

impl EstimatorSpec {
    pub fn frequency(smoothing: f64) -> Self {
        EstimatorSpec::Frequency { smoothing }
    }

    pub fn fit(&self, ds: &Dataset, cols: &[usize], rows: &[usize]) -> Result<Box<dyn PosteriorModel>> {
        Ok(match self {
            EstimatorSpec::Frequency { smoothing } => {
                check_smoothing(*smoothing)?;
                Box::new(FrequencyModel::fit(ds, cols, rows, *smoothing))
            }
            EstimatorSpec::Glm { epochs, learning_rate, seed } => {
                Box::new(GlmModel::fit(ds, cols, rows, *epochs, *learning_rate, *seed)?)
            }
        })
    }
}

fn check_smoothing(smoothing: f64) -> Result<()> {
    if !(smoothing >= 0.0 && smoothing.is_finite()) {
        return Err(Error::Domain(format!("smoothing must be non-negative, got {smoothing}")));
    }
    Ok(())
}

/// Whether posteriors are evaluated on the rows they were fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FitMode {
    InSample,
    CrossFit {
        #[serde(default = "default_folds")]
        folds: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub estimator: EstimatorSpec,
    pub fit: FitMode,
}

impl ModelSpec {
    pub fn in_sample(estimator: EstimatorSpec) -> Self {
        Self { estimator, fit: FitMode::InSample }
    }

    pub fn cross_fit(estimator: EstimatorSpec, folds: usize, seed: u64) -> Self {
        Self { estimator, fit: FitMode::CrossFit { folds, seed } }
    }

    /// Fold plan for a dataset of `n_rows`, `None` when fitting in-sample.
    pub fn plan(&self, n_rows: usize) -> Result<Option<CrossFitPlan>> {
        match self.fit {
            FitMode::InSample => Ok(None),
            FitMode::CrossFit { folds, seed } => CrossFitPlan::new(n_rows, folds, seed).map(Some),
        }
    }
}

// ---------------------------------------------------------------------------
// Cross-fitting
// ---------------------------------------------------------------------------

/// Seeded partition of rows into `k` folds of near-equal size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossFitPlan {
    k: usize,
    seed: u64,
    folds: Vec<u32>,
}

impl CrossFitPlan {
    pub fn new(n_rows: usize, k: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::Domain(format!("cross-fitting needs at least 2 folds, got {k}")));
        }
        if k > n_rows {
            return Err(Error::Domain(format!("{k} folds for {n_rows} rows")));
        }
        let mut order: Vec<usize> = (0..n_rows).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut folds = vec![0u32; n_rows];
        for (i, row) in order.into_iter().enumerate() {
            folds[row] = (i % k) as u32;
        }
        Ok(Self { k, seed, folds })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_rows(&self) -> usize {
        self.folds.len()
    }

    #[inline]
    pub fn fold_of(&self, row: usize) -> usize {
        self.folds[row] as usize
    }

    /// Rows outside fold `fold`.
    pub fn training_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&r| self.folds[r] as usize != fold).collect()
    }
}

/// A fitted posterior over a fixed column set, either in-sample or
/// cross-fitted. Cross-fitted rows are predicted by the model trained on the
/// other folds; realizations outside the data go to a full-data fit.
///
/// The empty column set needs no model: it is always the in-sample
/// (unsmoothed) prior, so that `R(∅)` is exactly the best fixed action's payoff.
#[derive(Debug)]
pub struct FittedPosterior {
    cols: Vec<usize>,
    full: Box<dyn PosteriorModel>,
    folds: Option<(Vec<u32>, Vec<Box<dyn PosteriorModel>>)>,
    description: String,
    warnings: Vec<String>,
}

/// Rows grouped by (fold, conditioning cell); every row in a group shares
/// one predicted belief.
#[derive(Debug, Clone)]
pub struct RowGroups {
    pub group_of_row: Vec<u32>,
    pub beliefs: Vec<Belief>,
}

impl FittedPosterior {
    pub fn fit(
        ds: &Dataset,
        cols: &[usize],
        estimator: &EstimatorSpec,
        plan: Option<&CrossFitPlan>,
    ) -> Result<Self> {
        if ds.n_rows() == 0 {
            return Err(Error::EmptyDataset);
        }
        let all: Vec<usize> = (0..ds.n_rows()).collect();
        if cols.is_empty() {
            let prior = FrequencyModel::fit(ds, cols, &all, 0.0);
            return Ok(Self {
                cols: Vec::new(),
                description: "prior".into(),
                full: Box::new(prior),
                folds: None,
                warnings: Vec::new(),
            });
        }
        let full = estimator.fit(ds, cols, &all)?;
        let description = full.description();
        let mut warnings = Vec::new();
        let folds = match plan {
            None => None,
            Some(plan) => {
                if plan.n_rows() != ds.n_rows() {
                    return Err(Error::Schema("fold plan does not match the dataset".into()));
                }
                let models = (0..plan.k())
                    .map(|fold| fit_fold(ds, cols, estimator, plan, fold, &mut warnings))
                    .collect::<Result<Vec<_>>>()?;
                Some((plan.folds.clone(), models))
            }
        };
        Ok(Self { cols: cols.to_vec(), full, folds, description, warnings })
    }

    pub fn columns(&self) -> &[usize] {
        &self.cols
    }

    pub fn is_cross_fitted(&self) -> bool {
        self.folds.is_some()
    }

    /// Degenerate-fold notices raised while fitting.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// The model that scores row `row`.
    pub fn model_for_row(&self, row: usize) -> &dyn PosteriorModel {
        match &self.folds {
            Some((assignment, models)) => models[assignment[row] as usize].as_ref(),
            None => self.full.as_ref(),
        }
    }

    /// Fold of `row`; 0 for every row when fitted in-sample.
    pub fn fold_of(&self, row: usize) -> usize {
        self.slot(row) as usize
    }

    fn slot(&self, row: usize) -> u32 {
        self.folds.as_ref().map_or(0, |(a, _)| a[row])
    }

    /// The row's own (out-of-fold when cross-fitted) posterior.
    pub fn row_belief(&self, ds: &Dataset, row: usize) -> Belief {
        self.model_for_row(row).predict(&ds.cell(row, &self.cols))
    }

    /// Memoized per-row predictions, grouped by (fold, cell).
    pub fn groups(&self, ds: &Dataset) -> RowGroups {
        let mut index: HashMap<(u32, Vec<u32>), u32> = HashMap::new();
        let mut beliefs = Vec::new();
        let group_of_row = (0..ds.n_rows())
            .map(|row| {
                let key = (self.slot(row), ds.cell(row, &self.cols));
                *index.entry(key).or_insert_with_key(|(_, cell)| {
                    beliefs.push(self.model_for_row(row).predict(cell));
                    (beliefs.len() - 1) as u32
                })
            })
            .collect();
        RowGroups { group_of_row, beliefs }
    }

    pub fn row_beliefs(&self, ds: &Dataset) -> Vec<Belief> {
        let groups = self.groups(ds);
        groups.group_of_row.iter().map(|&g| groups.beliefs[g as usize].clone()).collect()
    }
}

fn fit_fold(
    ds: &Dataset,
    cols: &[usize],
    estimator: &EstimatorSpec,
    plan: &CrossFitPlan,
    fold: usize,
    warnings: &mut Vec<String>,
) -> Result<Box<dyn PosteriorModel>> {
    let rows = plan.training_rows(fold);
    if let EstimatorSpec::Frequency { smoothing } = estimator {
        if *smoothing == 0.0 {
            let model = FrequencyModel::fit(ds, cols, &rows, 0.0);
            if model.n_observed_states() < 2 {
                warnings.push(format!(
                    "fold {fold}: training rows contain a single state; using the full-data prior"
                ));
                let all: Vec<usize> = (0..ds.n_rows()).collect();
                // a column-free fit misses every cell and answers with its prior
                return Ok(Box::new(FrequencyModel::fit(ds, &[], &all, 0.0)));
            }
            return Ok(Box::new(model));
        }
    }
    estimator.fit(ds, cols, &rows)
}

impl PosteriorModel for FittedPosterior {
    fn num_states(&self) -> usize {
        self.full.num_states()
    }

    fn predict(&self, cell: &[u32]) -> Belief {
        self.full.predict(cell)
    }

    fn description(&self) -> String {
        match &self.folds {
            Some((_, m)) => format!("cross-fit(k={}, {})", m.len(), self.description),
            None => self.description.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_rows() -> Dataset {
        Dataset::builder()
            .signal("v", &["a", "b"], vec![0, 0, 1, 1])
            .unwrap()
            .state(&["0", "1"], vec![0, 1, 0, 1])
            .unwrap()
            .build()
            .unwrap()
    }

    #[test]
    fn plan_partitions_rows() {
        let plan = CrossFitPlan::new(103, 5, 7).unwrap();
        let mut sizes = [0usize; 5];
        for r in 0..103 {
            sizes[plan.fold_of(r)] += 1;
        }
        assert!(sizes.iter().all(|s| *s == 20 || *s == 21));
        assert_eq!(plan, CrossFitPlan::new(103, 5, 7).unwrap());
        assert!(CrossFitPlan::new(10, 1, 0).is_err());
        assert!(CrossFitPlan::new(3, 4, 0).is_err());
    }

    #[test]
    fn two_folds_predict_from_opposite_half() {
        let ds = four_rows();
        let plan = CrossFitPlan::new(4, 2, 3).unwrap();
        let est = EstimatorSpec::frequency(0.5);
        let fitted = FittedPosterior::fit(&ds, &[0], &est, Some(&plan)).unwrap();
        for row in 0..4 {
            let other: Vec<usize> = (0..4).filter(|&r| plan.fold_of(r) != plan.fold_of(row)).collect();
            let direct = FrequencyModel::fit(&ds, &[0], &other, 0.5);
            assert_eq!(fitted.row_belief(&ds, row), direct.predict(&ds.cell(row, &[0])));
        }
    }

    #[test]
    fn leave_one_out_supported() {
        let ds = crate::dgp::fixtures::bsc(0.5, 0.2).sample(200, 1).unwrap();
        let plan = CrossFitPlan::new(200, 200, 0).unwrap();
        let fitted =
            FittedPosterior::fit(&ds, &[0], &EstimatorSpec::frequency(1.0), Some(&plan)).unwrap();
        assert_eq!(fitted.row_beliefs(&ds).len(), 200);
    }

    #[test]
    fn degenerate_fold_warns() {
        let ds = Dataset::builder()
            .signal("v", &["a"], vec![0, 0, 0, 0])
            .unwrap()
            .state(&["0", "1"], vec![0, 0, 0, 1])
            .unwrap()
            .build()
            .unwrap();
        let plan = CrossFitPlan::new(4, 4, 0).unwrap();
        let fitted =
            FittedPosterior::fit(&ds, &[0], &EstimatorSpec::frequency(0.0), Some(&plan)).unwrap();
        assert_eq!(fitted.warnings().len(), 1);
        let held_out_one = (0..4).find(|&r| ds.state(r) == 1).unwrap();
        assert_eq!(fitted.row_belief(&ds, held_out_one).p1(), 0.25);
    }

    #[test]
    fn empty_columns_use_in_sample_prior() {
        let ds = four_rows();
        let plan = CrossFitPlan::new(4, 2, 0).unwrap();
        let fitted = FittedPosterior::fit(&ds, &[], &EstimatorSpec::frequency(1.0), Some(&plan)).unwrap();
        assert!(!fitted.is_cross_fitted());
        assert_eq!(fitted.row_belief(&ds, 0).probs(), &[0.5, 0.5]);
    }

    #[test]
    fn spec_parses() {
        let spec: ModelSpec = toml::from_str(
            "[estimator]\ntype = \"glm\"\nseed = 4\n[fit]\nmode = \"cross-fit\"\nseed = 1\n",
        )
        .unwrap();
        assert_eq!(spec.fit, FitMode::CrossFit { folds: 5, seed: 1 });
        assert!(matches!(spec.estimator, EstimatorSpec::Glm { epochs: 500, .. }));
    }
}
