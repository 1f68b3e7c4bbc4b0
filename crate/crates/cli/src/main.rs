//! `infoval`: value-of-information analyses from the command line.

mod commands;
mod config;
mod error;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{CliError, CliResult};
use crate::report::{to_json, write_atomic, Report, TOOL_VERSION};

#[derive(Debug, Parser)]
#[command(name = "infoval", version, about = "Decision-theoretic value of information")]
pub struct Cli {
    /// Run configuration (TOML or JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Seed for every stochastic step without its own seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Report destination (the CSV for `simulate`); stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    /// Plain-text attribution tables (`explain` only).
    Table,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// CSV dataset; overrides `[data].path`.
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// Sidecar schema; defaults to `<stem>.schema.json` next to the CSV.
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Information value IV(V) = R(V) − R(∅).
    Iv {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated signal set; "" is the empty set.
        #[arg(long)]
        signals: Option<String>,
        /// Bootstrap resamples.
        #[arg(long)]
        bootstrap: Option<usize>,
    },
    /// Agent-complementary information value ACIV(V; Db).
    Aciv {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        signals: Option<String>,
        /// Comma-separated agent-decision columns.
        #[arg(long)]
        agent: Option<String>,
        #[arg(long)]
        bootstrap: Option<usize>,
    },
    /// Instance-level information value ILIV for one group, scanned over every counterfactual.
    Iliv {
        #[command(flatten)]
        data: DataArgs,
        /// Group realization, e.g. `s1=1,s2=0`.
        #[arg(long)]
        actual: Option<String>,
        /// Counterfactual realization over the same signals.
        #[arg(long)]
        counterfactual: Option<String>,
        #[arg(long)]
        agent: Option<String>,
        #[arg(long)]
        bootstrap: Option<usize>,
    },
    /// Shapley split (or greedy ordering) of ACIV over individual signals.
    Shapley {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated players, in tie-break order.
        #[arg(long)]
        signals: Option<String>,
        #[arg(long)]
        agent: Option<String>,
        #[arg(long, value_enum)]
        mode: Option<ShapleyModeArg>,
    },
    /// SHAP and ILIV-SHAP attributions with highlights for selected rows.
    Explain {
        #[command(flatten)]
        data: DataArgs,
        /// Row index to explain; repeatable.
        #[arg(long = "instance")]
        instances: Vec<usize>,
        #[arg(long, value_enum, default_value_t = MethodArg::Exact)]
        method: MethodArg,
        #[arg(long)]
        permutations: Option<usize>,
        /// Highlight threshold τ.
        #[arg(long, allow_negative_numbers = true)]
        threshold: Option<f64>,
        #[arg(long)]
        agent: Option<String>,
    },
    /// Payoff or ACIV curves over V-shaped scoring rules and dominance verdicts.
    Robustness {
        #[command(flatten)]
        data: DataArgs,
        /// Candidate sets separated by `;`, e.g. `A;B;A,B`.
        #[arg(long)]
        sets: Option<String>,
        #[arg(long)]
        agent: Option<String>,
        #[arg(long)]
        mu_step: Option<f64>,
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long)]
        bootstrap: Option<usize>,
        /// Plot-data JSON destination.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Sample a synthetic process to CSV plus a sidecar schema.
    Simulate {
        /// Built-in process name.
        #[arg(long, conflicts_with = "dgp")]
        fixture: Option<String>,
        /// Process specification (JSON or TOML).
        #[arg(long)]
        dgp: Option<PathBuf>,
        #[arg(long)]
        n: usize,
    },
    /// Calibration error, swap regret and the regret bound per estimator.
    Diagnose {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        signals: Option<String>,
        /// Column of external predictions P(ω = 1); repeatable.
        #[arg(long = "score")]
        scores: Vec<String>,
        #[arg(long)]
        bins: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ShapleyModeArg {
    Exact,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Exact,
    Permutation,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Iv { .. } => "iv",
            Command::Aciv { .. } => "aciv",
            Command::Iliv { .. } => "iliv",
            Command::Shapley { .. } => "shapley",
            Command::Explain { .. } => "explain",
            Command::Robustness { .. } => "robustness",
            Command::Simulate { .. } => "simulate",
            Command::Diagnose { .. } => "diagnose",
        }
    }
}

/// Arguments that feed the fingerprint: everything except the report path.
fn fingerprint_args(args: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
        } else if a == "--out" {
            skip = true;
        } else if !a.starts_with("--out=") {
            out.push(a.clone());
        }
    }
    out
}

fn run(cli: &Cli, args: &[String]) -> CliResult<()> {
    let start = Instant::now();
    let loaded = config::load(cli.config.as_deref())?;
    if cli.format == Format::Table && !matches!(cli.command, Command::Explain { .. }) {
        return Err(CliError::Config("table output is only available for explain".into()));
    }
    let outcome = commands::dispatch(cli, &loaded)?;
    let report = Report {
        tool: "infoval",
        version: TOOL_VERSION,
        command: cli.command.name().to_string(),
        config_fingerprint: config::fingerprint(&loaded.bytes, &fingerprint_args(args)),
        seed: outcome.seed,
        results: outcome.results,
        diagnostics: outcome.diagnostics,
        warnings: outcome.warnings,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    if let Some((path, plot)) = &outcome.plot {
        write_atomic(path, to_json(plot)?.as_bytes())?;
    }
    let text = match (cli.format, outcome.text) {
        (Format::Table, Some(t)) => t,
        _ => to_json(&report)?,
    };
    let destination = match &cli.command {
        Command::Simulate { .. } => loaded.config.output.report.as_ref().map(|p| loaded.resolve(p)),
        _ => cli.out.clone().or_else(|| loaded.config.output.report.as_ref().map(|p| loaded.resolve(p))),
    };
    match destination {
        Some(path) => write_atomic(&path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    match run(&cli, &args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("infoval: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
