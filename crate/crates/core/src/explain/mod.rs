//! Feature attributions for a predictive model: classical SHAP over the
//! model output, and ILIV-SHAP, whose coalition value is the instance-level
//! complementary information value of the coalition-conditional prediction.

mod table;

pub use table::render_table;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::data::{Column, Dataset, Role};
use crate::decision::{DecisionProblem, Grid, DEFAULT_GRID_STEP};
use crate::error::{Error, Result};
use crate::estimation::ModelSpec;
use crate::game::{self, Coalition, PermutationSpec, ShapleyValues};
use crate::infovalue::{EmpiricalSource, IlivEvaluator, SignalSet};

/// Name of the derived column that holds the binned model prediction.
pub const PREDICTION_COLUMN: &str = "f(x)";

pub trait PredictiveModel: Send + Sync {
    fn feature_names(&self) -> &[String];
    fn predict(&self, x: &[f64]) -> f64;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Link {
    #[default]
    Identity,
    Logistic,
}

/// `link(intercept + w·x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearModel {
    pub features: Vec<String>,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub intercept: f64,
    #[serde(default)]
    pub link: Link,
}

impl LinearModel {
    pub fn new(features: &[&str], weights: Vec<f64>, intercept: f64, link: Link) -> Result<Self> {
        let model = Self { features: features.iter().map(|s| s.to_string()).collect(), weights, intercept, link };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.len() != self.weights.len() {
            return Err(Error::Schema(format!(
                "{} features but {} weights",
                self.features.len(),
                self.weights.len()
            )));
        }
        if self.weights.iter().chain([&self.intercept]).any(|w| !w.is_finite()) {
            return Err(Error::Numeric("model weights must be finite".into()));
        }
        Ok(())
    }
}

impl PredictiveModel for LinearModel {
    fn feature_names(&self) -> &[String] {
        &self.features
    }

    fn predict(&self, x: &[f64]) -> f64 {
        let z = self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        match self.link {
            Link::Identity => z,
            Link::Logistic => 1.0 / (1.0 + (-z).exp()),
        }
    }
}

/// Wraps a closure as a model.
pub struct FnModel<F> {
    names: Vec<String>,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> FnModel<F> {
    pub fn new(names: &[&str], f: F) -> Self {
        Self { names: names.iter().map(|s| s.to_string()).collect(), f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> PredictiveModel for FnModel<F> {
    fn feature_names(&self) -> &[String] {
        &self.names
    }

    fn predict(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// Numeric feature rows for `names`: bin representatives for numeric
/// columns, parsed labels (or codes when a label is not a number) otherwise.
pub fn feature_rows<S: AsRef<str>>(ds: &Dataset, names: &[S]) -> Result<Vec<Vec<f64>>> {
    let cols = names.iter().map(|n| ds.column_by_name(n.as_ref())).collect::<Result<Vec<_>>>()?;
    Ok((0..ds.n_rows())
        .map(|r| {
            cols.iter()
                .map(|c| {
                    let code = c.codes()[r];
                    let v = c.representatives()[code as usize];
                    if v.is_nan() {
                        code as f64
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect())
}

/// How features outside a coalition are filled in.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Imputation {
    /// Average over background rows with the coalition features overwritten
    /// by the instance's values.
    #[default]
    Interventional,
    /// Average over the background rows that agree with the instance on
    /// every coalition feature.
    Conditional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttributionKind {
    Shap,
    IlivShap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum AttributionMethod {
    Exact,
    Permutation { permutations: usize, seed: u64, antithetic: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub kind: AttributionKind,
    pub method: AttributionMethod,
    pub features: Vec<String>,
    pub instance: Vec<f64>,
    pub scores: Vec<f64>,
    pub standard_errors: Option<Vec<f64>>,
    /// Value of the empty coalition.
    pub base: f64,
    /// Value of the full coalition.
    pub total: f64,
}

impl Attribution {
    fn from_values(
        kind: AttributionKind,
        method: AttributionMethod,
        features: &[String],
        x: &[f64],
        v: ShapleyValues,
    ) -> Self {
        Self {
            kind,
            method,
            features: features.to_vec(),
            instance: x.to_vec(),
            scores: v.scores,
            standard_errors: v.standard_errors,
            base: v.empty_value,
            total: v.full_value,
        }
    }

    /// `Σφ − (total − base)`.
    pub fn efficiency_gap(&self) -> f64 {
        self.scores.iter().sum::<f64>() - (self.total - self.base)
    }
}

fn method_of(spec: &PermutationSpec) -> AttributionMethod {
    AttributionMethod::Permutation { permutations: spec.permutations, seed: spec.seed, antithetic: spec.antithetic }
}

/// Classical SHAP over a model and a background sample.
pub struct Explainer<'a> {
    model: &'a dyn PredictiveModel,
    background: Vec<Vec<f64>>,
    imputation: Imputation,
}

impl<'a> Explainer<'a> {
    pub fn new(model: &'a dyn PredictiveModel, background: Vec<Vec<f64>>) -> Result<Self> {
        if background.is_empty() {
            return Err(Error::Domain("background sample is empty".into()));
        }
        let m = model.feature_names().len();
        if background.iter().any(|r| r.len() != m) {
            return Err(Error::Schema(format!("background rows must have {m} features")));
        }
        Ok(Self { model, background, imputation: Imputation::Interventional })
    }

    pub fn with_imputation(mut self, imputation: Imputation) -> Self {
        self.imputation = imputation;
        self
    }

    pub fn model(&self) -> &dyn PredictiveModel {
        self.model
    }

    pub fn n_features(&self) -> usize {
        self.model.feature_names().len()
    }

    fn check_instance(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(Error::Schema(format!("instance has {} features, model has {}", x.len(), self.n_features())));
        }
        Ok(())
    }

    /// `g_f(x′)`: expected model output with the coalition's features fixed
    /// to the instance's values.
    pub fn coalition_value(&self, x: &[f64], coalition: Coalition) -> Result<f64> {
        self.check_instance(x)?;
        let m = self.n_features();
        if coalition == game::full_coalition(m) {
            return Ok(self.model.predict(x));
        }
        let in_coalition = |j: usize| coalition >> j & 1 == 1;
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut z = vec![0.0; m];
        for row in &self.background {
            if self.imputation == Imputation::Conditional && (0..m).any(|j| in_coalition(j) && row[j] != x[j]) {
                continue;
            }
            for j in 0..m {
                z[j] = if in_coalition(j) { x[j] } else { row[j] };
            }
            sum += self.model.predict(&z);
            count += 1;
        }
        if count == 0 {
            return Err(Error::NoInstances("no background row matches the coalition".into()));
        }
        Ok(sum / count as f64)
    }

    pub fn shap_exact(&self, x: &[f64]) -> Result<Attribution> {
        self.check_instance(x)?;
        let v = game::exact(self.n_features(), |c| self.coalition_value(x, c))?;
        Ok(Attribution::from_values(AttributionKind::Shap, AttributionMethod::Exact, self.model.feature_names(), x, v))
    }

    pub fn shap_permutation(&self, x: &[f64], spec: &PermutationSpec) -> Result<Attribution> {
        self.check_instance(x)?;
        let v = game::permutation(self.n_features(), spec, |c| self.coalition_value(x, c))?;
        Ok(Attribution::from_values(AttributionKind::Shap, method_of(spec), self.model.feature_names(), x, v))
    }
}

/// ILIV-SHAP: the model prediction, binned on `grid`, is the signal. An
/// instance's group is the set of rows whose binned prediction equals its
/// own; coalition `x′` is worth `ILIV^{f(x)}(g_f(x′); Db)`, with `g_f(x′)`
/// binned the same way.
pub struct IlivShapExplainer<'a> {
    explainer: Explainer<'a>,
    grid: Grid,
    source: EmpiricalSource,
    problem: DecisionProblem,
    agent: SignalSet,
    groups: Mutex<HashMap<u32, Arc<IlivEvaluator>>>,
}

impl<'a> IlivShapExplainer<'a> {
    /// `rows` holds each dataset row's feature vector.
    pub fn new(
        explainer: Explainer<'a>,
        ds: &Dataset,
        rows: &[Vec<f64>],
        problem: &DecisionProblem,
        agent: &SignalSet,
        model_spec: &ModelSpec,
        grid: Grid,
    ) -> Result<Self> {
        if rows.len() != ds.n_rows() {
            return Err(Error::Schema(format!("{} feature rows for {} dataset rows", rows.len(), ds.n_rows())));
        }
        if ds.column_index(PREDICTION_COLUMN).is_ok() {
            return Err(Error::Schema(format!("dataset already has a column named {PREDICTION_COLUMN:?}")));
        }
        let predictions = rows
            .iter()
            .map(|x| {
                explainer.check_instance(x)?;
                Ok(explainer.model.predict(x))
            })
            .collect::<Result<Vec<_>>>()?;
        let column = Column::grid(PREDICTION_COLUMN, Role::Signal, &grid, &predictions)?;
        let ds = ds.with_column(column)?;
        Ok(Self {
            explainer,
            grid,
            source: EmpiricalSource::new(&ds, model_spec)?,
            problem: problem.clone(),
            agent: agent.clone(),
            groups: Mutex::new(HashMap::new()),
        })
    }

    pub fn default_grid() -> Grid {
        Grid::unit(DEFAULT_GRID_STEP).expect("valid default grid")
    }

    pub fn explainer(&self) -> &Explainer<'a> {
        &self.explainer
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// The augmented dataset, with the binned prediction column.
    pub fn dataset(&self) -> &Dataset {
        self.source.dataset()
    }

    /// Grid label of the instance's binned prediction.
    pub fn group_label(&self, x: &[f64]) -> Result<String> {
        self.explainer.check_instance(x)?;
        Ok(self.grid.labels()[self.bin(self.explainer.model.predict(x)) as usize].clone())
    }

    fn bin(&self, p: f64) -> u32 {
        self.grid.nearest(p) as u32
    }

    fn group(&self, code: u32) -> Result<Arc<IlivEvaluator>> {
        if let Some(ev) = self.groups.lock().expect("group lock").get(&code) {
            return Ok(Arc::clone(ev));
        }
        let signals = SignalSet::new([PREDICTION_COLUMN]);
        let ev = Arc::new(IlivEvaluator::from_codes(&self.source, &self.problem, &signals, &[code], &self.agent)?);
        self.groups.lock().expect("group lock").insert(code, Arc::clone(&ev));
        Ok(ev)
    }

    /// `ν(x′) = ILIV^{f(x)}(g_f(x′); Db)`.
    pub fn coalition_value(&self, x: &[f64], coalition: Coalition) -> Result<f64> {
        let group = self.group(self.bin(self.explainer.model.predict(x)))?;
        let g = self.explainer.coalition_value(x, coalition)?;
        group.iliv(&[self.bin(g)])
    }

    pub fn exact(&self, x: &[f64]) -> Result<Attribution> {
        self.explainer.check_instance(x)?;
        self.group(self.bin(self.explainer.model.predict(x)))?;
        let v = game::exact(self.explainer.n_features(), |c| self.coalition_value(x, c))?;
        Ok(Attribution::from_values(
            AttributionKind::IlivShap,
            AttributionMethod::Exact,
            self.explainer.model.feature_names(),
            x,
            v,
        ))
    }

    pub fn permutation(&self, x: &[f64], spec: &PermutationSpec) -> Result<Attribution> {
        self.explainer.check_instance(x)?;
        let v = game::permutation(self.explainer.n_features(), spec, |c| self.coalition_value(x, c))?;
        Ok(Attribution::from_values(
            AttributionKind::IlivShap,
            method_of(spec),
            self.explainer.model.feature_names(),
            x,
            v,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub feature: String,
    pub index: usize,
    pub score: f64,
    pub highlighted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighlightReport {
    pub threshold: f64,
    /// Descending by score, ties by feature index.
    pub ranking: Vec<RankedFeature>,
}

impl HighlightReport {
    pub fn highlighted(&self) -> impl Iterator<Item = &RankedFeature> {
        self.ranking.iter().filter(|r| r.highlighted)
    }

    pub fn is_highlighted(&self, index: usize) -> bool {
        self.ranking.iter().any(|r| r.index == index && r.highlighted)
    }
}

/// Ranks features by score and flags those with score ≥ `threshold`.
pub fn highlight(attr: &Attribution, threshold: f64) -> Result<HighlightReport> {
    if threshold.is_nan() {
        return Err(Error::Domain("highlight threshold is NaN".into()));
    }
    let mut ranking: Vec<RankedFeature> = attr
        .features
        .iter()
        .zip(&attr.scores)
        .enumerate()
        .map(|(index, (f, &score))| RankedFeature {
            feature: f.clone(),
            index,
            score,
            highlighted: score >= threshold,
        })
        .collect();
    ranking.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));
    Ok(HighlightReport { threshold, ranking })
}
