use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Serialize;
use serde_json::{json, Value};

use infoval_core::data::write_csv;
use infoval_core::decision::Grid;
use infoval_core::dgp::{fixtures, SyntheticDgp};
use infoval_core::estimation::{regret_bound_check, CalibrationReport, ModelSpec, DEFAULT_ECE_BINS};
use infoval_core::explain::{
    feature_rows, highlight, render_table, Attribution, Explainer, HighlightReport, IlivShapExplainer,
};
use infoval_core::game::PermutationSpec;
use infoval_core::infovalue::{
    BootstrapSpec, EmpiricalSource, Evaluator, IlivEvaluator, IlivQuery, InfoValueEstimate, ShapleyMode,
};
use infoval_core::robustness::{dominance_matrix, sweep, sweep_with_bootstrap, MuGrid, SweepResult};
use infoval_core::{Belief, Dataset, DecisionProblem, SignalSet};

use crate::config::{sidecar_path, Loaded, ModelArtifact};
use crate::error::{CliError, CliResult};
use crate::report::{to_json, to_value, write_atomic};
use crate::{Cli, Command, DataArgs, MethodArg, ShapleyModeArg};

const DEFAULT_PERMUTATIONS: usize = 2000;

#[derive(Debug, Default)]
pub struct Outcome {
    pub results: Value,
    pub diagnostics: Option<Value>,
    pub warnings: Vec<String>,
    pub seed: Option<u64>,
    /// Plain-text rendering for `--format table`.
    pub text: Option<String>,
    pub plot: Option<(PathBuf, Value)>,
}

pub fn dispatch(cli: &Cli, loaded: &Loaded) -> CliResult<Outcome> {
    let ctx = Ctx { cli, loaded };
    match &cli.command {
        Command::Iv { data, signals, bootstrap } => ctx.iv(data, signals.as_deref(), *bootstrap),
        Command::Aciv { data, signals, agent, bootstrap } => {
            ctx.aciv(data, signals.as_deref(), agent.as_deref(), *bootstrap)
        }
        Command::Iliv { data, actual, counterfactual, agent, bootstrap } => {
            ctx.iliv(data, actual.as_deref(), counterfactual.as_deref(), agent.as_deref(), *bootstrap)
        }
        Command::Shapley { data, signals, agent, mode } => {
            ctx.shapley(data, signals.as_deref(), agent.as_deref(), *mode)
        }
        Command::Explain { data, instances, method, permutations, threshold, agent } => {
            ctx.explain(data, instances, *method, *permutations, *threshold, agent.as_deref())
        }
        Command::Robustness { data, sets, agent, mu_step, tolerance, bootstrap, plot } => ctx.robustness(
            data,
            sets.as_deref(),
            agent.as_deref(),
            *mu_step,
            *tolerance,
            *bootstrap,
            plot.clone(),
        ),
        Command::Simulate { fixture, dgp, n } => ctx.simulate(fixture.as_deref(), dgp.clone(), *n),
        Command::Diagnose { data, signals, scores, bins } => ctx.diagnose(data, signals.as_deref(), scores, *bins),
    }
}

struct Ctx<'a> {
    cli: &'a Cli,
    loaded: &'a Loaded,
}

fn parse_pairs(s: &str) -> CliResult<BTreeMap<String, String>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("expected name=value, got {t:?}")))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

fn ordered_list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(String::from).collect()
}

fn model_calibration(
    ds: &Dataset,
    problem: &DecisionProblem,
    model: &ModelSpec,
    signals: &SignalSet,
    bins: usize,
) -> CliResult<CalibrationReport> {
    let fitted = EmpiricalSource::new(ds, model)?.fit(signals)?;
    Ok(regret_bound_check(&fitted.row_beliefs(ds), ds, problem, bins)?)
}

impl Ctx<'_> {
    fn config(&self) -> &crate::config::AnalysisConfig {
        &self.loaded.config.analysis
    }

    fn dataset(&self, data: &DataArgs) -> CliResult<(Dataset, Vec<String>)> {
        self.loaded.dataset(data.data.as_deref(), data.schema.as_deref())
    }

    fn signals(&self, flag: Option<&str>) -> CliResult<SignalSet> {
        match flag {
            Some(s) => Ok(SignalSet::parse(s)),
            None => self
                .config()
                .signals
                .clone()
                .ok_or_else(|| CliError::Config("no signal set: pass --signals or set analysis.signals".into())),
        }
    }

    fn agent(&self, flag: Option<&str>) -> SignalSet {
        flag.map(SignalSet::parse).or_else(|| self.config().agent.clone()).unwrap_or_default()
    }

    fn bootstrap(&self, flag: Option<usize>) -> CliResult<Option<BootstrapSpec>> {
        match flag.or(self.config().bootstrap) {
            None | Some(0) => Ok(None),
            Some(resamples) => {
                let seed = self.loaded.require_seed(self.cli.seed, "bootstrap")?;
                Ok(Some(BootstrapSpec { resamples, seed }))
            }
        }
    }

    fn evaluator(&self, ds: &Dataset, problem: &DecisionProblem, boot: Option<BootstrapSpec>) -> CliResult<Evaluator> {
        let ev = Evaluator::new(ds, problem, &self.loaded.model())?;
        Ok(match boot {
            Some(spec) => ev.with_bootstrap(spec),
            None => ev,
        })
    }

    /// Calibration of the posterior model behind an estimate, when the state is binary.
    fn diagnostics(&self, ds: &Dataset, problem: &DecisionProblem, signals: &SignalSet) -> CliResult<Option<Value>> {
        if ds.num_states() != 2 {
            return Ok(None);
        }
        let bins = self.config().ece_bins.unwrap_or(DEFAULT_ECE_BINS);
        let report = model_calibration(ds, problem, &self.loaded.model(), signals, bins)?;
        Ok(Some(to_value(&report)?))
    }

    fn iv(&self, data: &DataArgs, signals: Option<&str>, bootstrap: Option<usize>) -> CliResult<Outcome> {
        let (ds, warnings) = self.dataset(data)?;
        let problem = self.loaded.problem()?;
        let signals = self.signals(signals)?;
        let boot = self.bootstrap(bootstrap)?;
        let est = self.evaluator(&ds, &problem, boot)?.information_value(&signals)?;
        Ok(Outcome {
            results: json!({
                "estimate": to_value(&est)?,
                "rational_payoff": est.value + est.baseline,
                "prior_payoff": est.baseline,
            }),
            diagnostics: self.diagnostics(&ds, &problem, &signals)?,
            warnings,
            seed: boot.map(|b| b.seed),
            ..Outcome::default()
        })
    }

    fn aciv(&self, data: &DataArgs, signals: Option<&str>, agent: Option<&str>, bootstrap: Option<usize>) -> CliResult<Outcome> {
        let (ds, warnings) = self.dataset(data)?;
        let problem = self.loaded.problem()?;
        let signals = self.signals(signals)?;
        let agent = self.agent(agent);
        let boot = self.bootstrap(bootstrap)?;
        let est = self.evaluator(&ds, &problem, boot)?.aciv(&signals, &agent)?;
        Ok(Outcome {
            results: json!({
                "estimate": to_value(&est)?,
                "agent_payoff": est.baseline,
                "combined_payoff": est.value + est.baseline,
            }),
            diagnostics: self.diagnostics(&ds, &problem, &signals.union(&agent))?,
            warnings,
            seed: boot.map(|b| b.seed),
            ..Outcome::default()
        })
    }

    fn iliv(
        &self,
        data: &DataArgs,
        actual: Option<&str>,
        counterfactual: Option<&str>,
        agent: Option<&str>,
        bootstrap: Option<usize>,
    ) -> CliResult<Outcome> {
        let (ds, warnings) = self.dataset(data)?;
        let problem = self.loaded.problem()?;
        let actual = match actual {
            Some(s) => parse_pairs(s)?,
            None => self
                .config()
                .actual
                .clone()
                .ok_or_else(|| CliError::Config("no group: pass --actual or set analysis.actual".into()))?,
        };
        let counterfactual = match counterfactual {
            Some(s) => Some(parse_pairs(s)?),
            None => self.config().counterfactual.clone(),
        };
        let agent = self.agent(agent);
        let boot = self.bootstrap(bootstrap)?;
        let ev = self.evaluator(&ds, &problem, boot)?;

        let scan_query = IlivQuery { actual: actual.clone(), counterfactual: actual.clone(), agent: agent.clone() };
        let group = IlivEvaluator::new(ev.source(), &problem, &scan_query)?;
        let names = group.signal_names().to_vec();
        let columns = names.iter().map(|n| ds.column_by_name(n)).collect::<Result<Vec<_>, _>>()?;
        let domain = group.domain();
        let mut scan = Vec::new();
        let mut codes = vec![0u32; domain.len()];
        loop {
            let labels: BTreeMap<&str, &str> = names
                .iter()
                .zip(&columns)
                .zip(&codes)
                .map(|((n, c), &v)| (n.as_str(), c.labels()[v as usize].as_str()))
                .collect();
            let payoff = group.payoff(&codes)?;
            scan.push(json!({ "counterfactual": labels, "payoff": payoff, "iliv": payoff - group.baseline() }));
            let mut k = 0;
            while k < codes.len() {
                codes[k] += 1;
                if (codes[k] as usize) < domain[k] {
                    break;
                }
                codes[k] = 0;
                k += 1;
            }
            if k == codes.len() {
                break;
            }
        }
        let best = scan
            .iter()
            .map(|e| e["iliv"].as_f64().unwrap_or(f64::NEG_INFINITY))
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 + 1e-12 { (i, v) } else { acc });
        let estimate: Option<InfoValueEstimate> = match counterfactual {
            Some(cf) => Some(ev.iliv(&IlivQuery { actual: actual.clone(), counterfactual: cf, agent: agent.clone() })?),
            None => None,
        };
        Ok(Outcome {
            results: json!({
                "group": actual,
                "agent": agent,
                "group_size": group.group_size(),
                "baseline": group.baseline(),
                "estimate": estimate,
                "scan": scan,
                "argmax": scan[best.0]["counterfactual"],
            }),
            warnings,
            seed: boot.map(|b| b.seed),
            ..Outcome::default()
        })
    }

    fn shapley(&self, data: &DataArgs, signals: Option<&str>, agent: Option<&str>, mode: Option<ShapleyModeArg>) -> CliResult<Outcome> {
        let (ds, warnings) = self.dataset(data)?;
        let problem = self.loaded.problem()?;
        let players = match signals {
            Some(s) => ordered_list(s),
            None => self
                .config()
                .players
                .clone()
                .or_else(|| self.config().signals.as_ref().map(|s| s.names().to_vec()))
                .ok_or_else(|| CliError::Config("no players: pass --signals or set analysis.players".into()))?,
        };
        let agent = self.agent(agent);
        let mode = match mode {
            Some(ShapleyModeArg::Exact) => ShapleyMode::Exact,
            Some(ShapleyModeArg::Greedy) => ShapleyMode::Greedy,
            None => self.config().shapley.unwrap_or(ShapleyMode::Exact),
        };
        let result = self.evaluator(&ds, &problem, None)?.shapley_aciv(&players, &agent, mode)?;
        let gap = result.scores.iter().sum::<f64>() - result.total;
        Ok(Outcome {
            results: json!({ "shapley": to_value(&result)?, "efficiency_gap": gap }),
            warnings,
            ..Outcome::default()
        })
    }

    fn explain(
        &self,
        data: &DataArgs,
        instances: &[usize],
        method: MethodArg,
        permutations: Option<usize>,
        threshold: Option<f64>,
        agent: Option<&str>,
    ) -> CliResult<Outcome> {
        let (ds, warnings) = self.dataset(data)?;
        let problem = self.loaded.problem()?;
        let cfg = self
            .config()
            .explain
            .clone()
            .ok_or_else(|| CliError::Config("explain needs an analysis.explain section".into()))?;
        let artifact = match (&cfg.model, &cfg.model_path) {
            (Some(m), _) => m.clone(),
            (None, Some(p)) => {
                let path = self.loaded.resolve(p);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            (None, None) => return Err(CliError::Config("explain needs a model or model_path".into())),
        };
        let ModelArtifact::Linear(model) = artifact;
        model.validate()?;
        let rows = feature_rows(&ds, &model.features)?;
        let background: Vec<Vec<f64>> = match cfg.background {
            Some(k) if k > 0 && k < rows.len() => (0..k).map(|i| rows[i * rows.len() / k].clone()).collect(),
            _ => rows.clone(),
        };
        let explainer = Explainer::new(&model, background)?.with_imputation(cfg.imputation);
        let grid = match cfg.grid_step {
            Some(step) => Grid::unit(step)?,
            None => IlivShapExplainer::default_grid(),
        };
        let agent = self.agent(agent);
        let iliv = IlivShapExplainer::new(explainer, &ds, &rows, &problem, &agent, &self.loaded.model(), grid)?;

        let instances = if instances.is_empty() { cfg.instances.clone() } else { instances.to_vec() };
        if instances.is_empty() {
            return Err(CliError::Config("no instances: pass --instance or set analysis.explain.instances".into()));
        }
        let threshold = threshold.or(cfg.threshold).unwrap_or(0.0);
        let spec = match method {
            MethodArg::Exact => None,
            MethodArg::Permutation => Some(PermutationSpec {
                permutations: permutations.or(cfg.permutations).unwrap_or(DEFAULT_PERMUTATIONS),
                seed: self.loaded.require_seed(self.cli.seed, "permutation sampling")?,
                antithetic: true,
            }),
        };

        #[derive(Serialize)]
        struct Explained {
            row: usize,
            group: String,
            shap: Attribution,
            iliv_shap: Attribution,
            highlights: HighlightReport,
            efficiency_gap: BTreeMap<&'static str, f64>,
        }
        let mut explained = Vec::new();
        let mut text = String::new();
        for &row in &instances {
            let x = rows
                .get(row)
                .ok_or_else(|| CliError::Config(format!("instance {row} is out of range ({} rows)", rows.len())))?;
            let (shap, iliv_shap) = match &spec {
                None => (iliv.explainer().shap_exact(x)?, iliv.exact(x)?),
                Some(s) => (iliv.explainer().shap_permutation(x, s)?, iliv.permutation(x, s)?),
            };
            let highlights = highlight(&iliv_shap, threshold)?;
            let group = iliv.group_label(x)?;
            text.push_str(&format!("instance {row} (prediction bin {group})\n"));
            text.push_str(&render_table(&shap, &iliv_shap, &highlights));
            text.push('\n');
            let efficiency_gap =
                BTreeMap::from([("shap", shap.efficiency_gap()), ("iliv_shap", iliv_shap.efficiency_gap())]);
            explained.push(Explained { row, group, shap, iliv_shap, highlights, efficiency_gap });
        }
        Ok(Outcome {
            results: json!({ "threshold": threshold, "instances": to_value(&explained)? }),
            warnings,
            seed: spec.map(|s| s.seed),
            text: Some(text),
            ..Outcome::default()
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn robustness(
        &self,
        data: &DataArgs,
        sets: Option<&str>,
        agent: Option<&str>,
        mu_step: Option<f64>,
        tolerance: Option<f64>,
        bootstrap: Option<usize>,
        plot: Option<PathBuf>,
    ) -> CliResult<Outcome> {
        let (ds, warnings) = self.dataset(data)?;
        let sets: Vec<SignalSet> = match sets {
            Some(s) => s.split(';').map(SignalSet::parse).collect(),
            None => self
                .config()
                .signal_sets
                .clone()
                .ok_or_else(|| CliError::Config("no candidate sets: pass --sets or set analysis.signal_sets".into()))?,
        };
        let grid = match (mu_step, &self.config().mu_grid, self.config().mu_step) {
            (Some(step), _, _) => MuGrid::with_step(step)?,
            (None, Some(values), _) => MuGrid::new(values.clone())?,
            (None, None, Some(step)) => MuGrid::with_step(step)?,
            (None, None, None) => MuGrid::default(),
        };
        let agent = agent.map(SignalSet::parse).or_else(|| self.config().agent.clone()).filter(|a| !a.is_empty());
        let tolerance = tolerance.or(self.config().tolerance);
        let boot = self.bootstrap(bootstrap)?;
        let source = EmpiricalSource::new(&ds, &self.loaded.model())?;
        for s in sets.iter().chain(agent.iter()) {
            ds.resolve(s.names())?;
        }
        let result = match &boot {
            Some(spec) => sweep_with_bootstrap(&source, &sets, agent.as_ref(), &grid, spec)?,
            None => sweep(&source, &sets, agent.as_ref(), &grid)?,
        };
        let matrix = dominance_matrix(&result, tolerance)?;
        let plot_data = plot_data(&result);
        let plot_path = plot.or_else(|| self.loaded.config.output.plot.as_ref().map(|p| self.loaded.resolve(p)));
        Ok(Outcome {
            results: json!({
                "grid_points": grid.len(),
                "sweep": to_value(&result)?,
                "dominance": to_value(&matrix)?,
                "total_order": matrix.total_order(),
                "plot": plot_data.clone(),
            }),
            warnings,
            seed: boot.map(|b| b.seed),
            plot: plot_path.map(|p| (p, plot_data)),
            ..Outcome::default()
        })
    }

    fn simulate(&self, fixture: Option<&str>, dgp: Option<PathBuf>, n: usize) -> CliResult<Outcome> {
        let process: SyntheticDgp = match (fixture, dgp) {
            (Some(name), _) => fixtures::by_name(name).ok_or_else(|| {
                CliError::Config(format!("unknown fixture {name:?}; known: {}", fixtures::NAMES.join(", ")))
            })?,
            (None, Some(path)) => {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
                let parsed = if path.extension().is_some_and(|e| e == "toml") {
                    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
                } else {
                    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
                };
                parsed?
            }
            (None, None) => return Err(CliError::Config("simulate needs --fixture or --dgp".into())),
        };
        if n == 0 {
            return Err(CliError::Config("--n must be at least 1".into()));
        }
        let seed = self.loaded.require_seed(self.cli.seed, "simulate")?;
        let out = self
            .cli
            .out
            .clone()
            .ok_or_else(|| CliError::Config("simulate needs --out for the CSV file".into()))?;
        let ds = process.sample(n, seed)?;
        let mut csv = Vec::new();
        write_csv(&ds, &mut csv)?;
        write_atomic(&out, &csv)?;
        let schema_path = sidecar_path(&out);
        write_atomic(&schema_path, to_json(&process.schema())?.as_bytes())?;
        let prior = ds.prior()?;
        Ok(Outcome {
            results: json!({
                "dgp": process.name(),
                "rows": ds.n_rows(),
                "csv": out,
                "schema": schema_path,
                "state_frequencies": prior.probs(),
            }),
            seed: Some(seed),
            ..Outcome::default()
        })
    }

    fn diagnose(&self, data: &DataArgs, signals: Option<&str>, scores: &[String], bins: Option<usize>) -> CliResult<Outcome> {
        let (ds, warnings) = self.dataset(data)?;
        let problem = self.loaded.problem()?;
        let bins = bins.or(self.config().ece_bins).unwrap_or(DEFAULT_ECE_BINS);
        let score_columns: Vec<String> = if scores.is_empty() {
            self.config().score_columns.clone().unwrap_or_default()
        } else {
            scores.to_vec()
        };

        #[derive(Serialize)]
        #[serde(rename_all = "kebab-case")]
        enum Subject {
            Model { spec: ModelSpec, signals: SignalSet },
            ScoreColumn(String),
        }
        #[derive(Serialize)]
        struct Entry {
            subject: Subject,
            calibration: CalibrationReport,
        }
        let mut entries = Vec::new();
        let has_signals = signals.is_some() || self.config().signals.is_some();
        if has_signals || score_columns.is_empty() {
            let signals = self.signals(signals)?;
            let mut models = vec![self.loaded.model()];
            models.extend(self.config().estimators.clone().unwrap_or_default());
            for spec in models {
                let calibration = model_calibration(&ds, &problem, &spec, &signals, bins)?;
                entries.push(Entry { subject: Subject::Model { spec, signals: signals.clone() }, calibration });
            }
        }
        for col in &score_columns {
            let beliefs = ds
                .score(col)?
                .iter()
                .map(|&p| Belief::new(vec![1.0 - p, p]))
                .collect::<Result<Vec<_>, _>>()?;
            let calibration = regret_bound_check(&beliefs, &ds, &problem, bins)?;
            entries.push(Entry { subject: Subject::ScoreColumn(col.clone()), calibration });
        }
        let violations = entries.iter().filter(|e| !e.calibration.bound_holds).count();
        let binned_violations = entries.iter().filter(|e| !e.calibration.binned_bound_holds).count();
        Ok(Outcome {
            results: json!({
                "bins": bins,
                "entries": to_value(&entries)?,
                "bound_violations": violations,
                "binned_bound_violations": binned_violations,
            }),
            warnings,
            ..Outcome::default()
        })
    }
}

/// Line-plot arrays: one curve per candidate set and one difference curve
/// per ordered pair, all over the same `mu` axis.
fn plot_data(result: &SweepResult) -> Value {
    let series: Vec<Value> = result
        .series
        .iter()
        .map(|s| {
            let (lo, hi): (Option<Vec<f64>>, Option<Vec<f64>>) = match &s.intervals {
                Some(iv) => (Some(iv.iter().map(|i| i.lo).collect()), Some(iv.iter().map(|i| i.hi).collect())),
                None => (None, None),
            };
            json!({ "label": s.signals.to_string(), "y": s.values, "lo": lo, "hi": hi })
        })
        .collect();
    let mut differences = Vec::new();
    for a in &result.series {
        for b in &result.series {
            if a.signals != b.signals {
                let y: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
                differences.push(json!({ "row": a.signals.to_string(), "column": b.signals.to_string(), "y": y }));
            }
        }
    }
    json!({ "x": result.mu, "quantity": result.quantity, "series": series, "differences": differences })
}
