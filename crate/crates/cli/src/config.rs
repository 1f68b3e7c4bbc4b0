//! Run configuration: a TOML or JSON document naming the dataset, the
//! decision problem, the posterior model and the analysis parameters.
//! Relative paths resolve against the document's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use infoval_core::data::{load_csv, ColumnConfig, Schema};
use infoval_core::decision::ProblemConfig;
use infoval_core::estimation::{EstimatorSpec, ModelSpec, DEFAULT_SMOOTHING};
use infoval_core::explain::{Imputation, LinearModel};
use infoval_core::infovalue::ShapleyMode;
use infoval_core::{Dataset, DecisionProblem, SignalSet};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for every stochastic step that does not carry its own.
    pub seed: Option<u64>,
    pub data: Option<DataConfig>,
    pub problem: Option<ProblemConfig>,
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    /// Sidecar schema; defaults to `<stem>.schema.json` (or `.toml`) next to the CSV.
    pub schema: Option<PathBuf>,
    /// Inline alternative to a sidecar.
    pub columns: Option<Vec<ColumnConfig>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub signals: Option<SignalSet>,
    pub signal_sets: Option<Vec<SignalSet>>,
    pub agent: Option<SignalSet>,
    pub bootstrap: Option<usize>,
    pub actual: Option<BTreeMap<String, String>>,
    pub counterfactual: Option<BTreeMap<String, String>>,
    pub shapley: Option<ShapleyMode>,
    pub players: Option<Vec<String>>,
    pub mu_step: Option<f64>,
    pub mu_grid: Option<Vec<f64>>,
    pub tolerance: Option<f64>,
    /// Extra posterior models checked by `diagnose`.
    pub estimators: Option<Vec<ModelSpec>>,
    /// Columns holding external predictions `P(ω = 1)`, checked by `diagnose`.
    pub score_columns: Option<Vec<String>>,
    pub ece_bins: Option<usize>,
    pub explain: Option<ExplainConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ModelArtifact {
    Linear(LinearModel),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainConfig {
    pub model: Option<ModelArtifact>,
    /// JSON file holding a model artifact, used when `model` is absent.
    pub model_path: Option<PathBuf>,
    #[serde(default)]
    pub instances: Vec<usize>,
    #[serde(default)]
    pub permutations: Option<usize>,
    #[serde(default)]
    pub imputation: Imputation,
    /// Rows used as the imputation background; all rows when absent.
    pub background: Option<usize>,
    pub threshold: Option<f64>,
    pub grid_step: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub report: Option<PathBuf>,
    pub plot: Option<PathBuf>,
}

/// A parsed config plus what is needed to resolve paths and fingerprint it.
#[derive(Debug, Clone, Default)]
pub struct Loaded {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    pub bytes: Vec<u8>,
}

pub fn parse(text: &str, is_toml: bool) -> CliResult<RunConfig> {
    if is_toml {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))
    } else {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }
}

pub fn load(path: Option<&Path>) -> CliResult<Loaded> {
    let Some(path) = path else {
        return Ok(Loaded { base_dir: PathBuf::from("."), ..Loaded::default() });
    };
    let bytes = std::fs::read(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::Config(format!("{} is not UTF-8", path.display())))?;
    let is_toml = path.extension().is_some_and(|e| e == "toml");
    let config = parse(&text, is_toml).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { config, base_dir, bytes })
}

/// SHA-256 over the config bytes followed by the command-line arguments.
pub fn fingerprint(config_bytes: &[u8], args: &[String]) -> String {
    let mut h = Sha256::new();
    h.update(config_bytes);
    for a in args {
        h.update([0u8]);
        h.update(a.as_bytes());
    }
    hex::encode(h.finalize())
}

impl Loaded {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn seed(&self, cli: Option<u64>) -> Option<u64> {
        cli.or(self.config.seed)
    }

    pub fn require_seed(&self, cli: Option<u64>, what: &str) -> CliResult<u64> {
        self.seed(cli).ok_or_else(|| CliError::Config(format!("{what} needs a seed: pass --seed or set `seed`")))
    }

    pub fn problem(&self) -> CliResult<DecisionProblem> {
        let cfg = self.config.problem.clone().unwrap_or(ProblemConfig::Brier { step: 0.01 });
        Ok(DecisionProblem::from_config(&cfg)?)
    }

    pub fn model(&self) -> ModelSpec {
        self.config
            .model
            .clone()
            .unwrap_or_else(|| ModelSpec::in_sample(EstimatorSpec::frequency(DEFAULT_SMOOTHING)))
    }

    /// Loads the dataset named on the command line or in the config.
    pub fn dataset(&self, data: Option<&Path>, schema: Option<&Path>) -> CliResult<(Dataset, Vec<String>)> {
        let cfg = self.config.data.as_ref();
        let csv = match (data, cfg) {
            (Some(p), _) => p.to_path_buf(),
            (None, Some(c)) => self.resolve(&c.path),
            (None, None) => return Err(CliError::Config("no dataset: pass --data or set [data].path".into())),
        };
        let schema = match (schema, cfg) {
            (Some(p), _) => Schema::from_path(p)?,
            (None, Some(DataConfig { columns: Some(columns), .. })) => {
                let s = Schema { columns: columns.clone(), dgp: None };
                s.validate()?;
                s
            }
            (None, Some(DataConfig { schema: Some(p), .. })) => Schema::from_path(&self.resolve(p))?,
            _ => Schema::from_path(&sidecar(&csv)?)?,
        };
        if !csv.exists() {
            return Err(CliError::io(
                format!("reading {}", csv.display()),
                std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
            ));
        }
        let ingested = load_csv(&csv, &schema)?;
        Ok((ingested.dataset, ingested.warnings))
    }
}

/// Sidecar schema path for a CSV file.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    let stem = csv.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    csv.with_file_name(format!("{stem}.schema.json"))
}

fn sidecar(csv: &Path) -> CliResult<PathBuf> {
    let json = sidecar_path(csv);
    if json.exists() {
        return Ok(json);
    }
    let toml = json.with_extension("toml");
    if toml.exists() {
        return Ok(toml);
    }
    Err(CliError::Config(format!(
        "no schema for {}: pass --schema, set [data].schema or add {}",
        csv.display(),
        json.display()
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_config() {
        let text = r#"
            seed = 3
            [data]
            path = "d.csv"
            [problem]
            kind = "v-shaped"
            mu = 0.3
            [model]
            estimator = { type = "frequency", smoothing = 0.0 }
            fit = { mode = "cross-fit", folds = 4, seed = 9 }
            [analysis]
            signals = ["s2", "s1"]
            agent = ["a"]
            bootstrap = 100
        "#;
        let c = parse(text, true).unwrap();
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.analysis.signals.unwrap().names(), &["s1", "s2"]);
        assert_eq!(c.analysis.bootstrap, Some(100));
    }

    #[test]
    fn unknown_keys_are_line_addressed() {
        let err = parse("seed = 1\nbogus = 2\n", true).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        let err = parse("{\n\"seed\": 1,\n\"bogus\": 2}", false).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn linear_model_artifact() {
        let text = r#"{"analysis": {"explain": {"model": {"type": "linear", "features": ["x1"], "weights": [0.5]}}}}"#;
        let c = parse(text, false).unwrap();
        let ModelArtifact::Linear(m) = c.analysis.explain.unwrap().model.unwrap();
        assert_eq!(m.weights, vec![0.5]);
    }

    #[test]
    fn fingerprint_tracks_bytes() {
        let a = fingerprint(b"seed = 1", &["iv".into()]);
        assert_eq!(a, fingerprint(b"seed = 1", &["iv".into()]));
        assert_ne!(a, fingerprint(b"seed = 2", &["iv".into()]));
        assert_ne!(a, fingerprint(b"seed = 1", &["aciv".into()]));
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn missing_seed_is_config_error() {
        let l = Loaded::default();
        assert!(matches!(l.require_seed(None, "bootstrap"), Err(CliError::Config(_))));
        assert_eq!(l.require_seed(Some(4), "bootstrap").unwrap(), 4);
    }
}
