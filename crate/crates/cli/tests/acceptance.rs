//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use infoval_core::data::{Column, Role};
use infoval_core::decision::DecisionProblem;
use infoval_core::dgp::{fixtures, NodeRole, SyntheticDgp};
use infoval_core::estimation::{regret_bound_check, EstimatorSpec, ModelSpec};
use infoval_core::explain::{feature_rows, Explainer, IlivShapExplainer, LinearModel, Link};
use infoval_core::game::PermutationSpec;
use infoval_core::infovalue::{
    aciv, aciv_rowwise, exact_iliv, greedy_aciv, information_value, rational_payoff, shapley_aciv, EmpiricalSource,
    Evaluator, ExactSource, IlivEvaluator, ShapleyMode,
};
use infoval_core::robustness::{dominance_matrix, sweep, MuGrid};
use infoval_core::{Belief, Dataset, SignalSet};

type Check = Result<String, String>;

fn brier() -> DecisionProblem {
    DecisionProblem::brier(0.01).unwrap()
}

fn columns(dgp: &SyntheticDgp, role: NodeRole) -> Vec<String> {
    dgp.nodes().iter().filter(|n| n.role == role).map(|n| n.name.clone()).collect()
}

fn in_sample(smoothing: f64) -> ModelSpec {
    ModelSpec::in_sample(EstimatorSpec::frequency(smoothing))
}

fn verdict(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c1_oracle_equivalence() -> Check {
    let start = Instant::now();
    let names = ["xor-agent", "noisy-signals-agent", "agent-follows-signal", "ternary-agent", "garbling-chain", "noisy-signals"];
    let p = brier();
    let mut worst: (f64, String) = (0.0, String::new());
    for (k, name) in names.iter().enumerate() {
        let dgp = fixtures::by_name(name).unwrap();
        let exact = ExactSource::from_dgp(&dgp).map_err(|e| e.to_string())?;
        let ds = dgp.sample(100_000, 100 + k as u64).map_err(|e| e.to_string())?;
        let src = EmpiricalSource::new(&ds, &in_sample(1.0)).map_err(|e| e.to_string())?;
        let agent = SignalSet::new(columns(&dgp, NodeRole::Agent));
        let signals = columns(&dgp, NodeRole::Signal);
        let mut sets: Vec<SignalSet> = signals.iter().map(|s| SignalSet::new([s.clone()])).collect();
        sets.push(SignalSet::new(signals.clone()));
        for v in sets {
            let truth = aciv(&exact, &p, &v, &agent).map_err(|e| e.to_string())?;
            let est = if agent.is_empty() {
                aciv(&src, &p, &v, &agent)
            } else {
                aciv_rowwise(&src, &p, &v, &agent).map(|r| r.0)
            }
            .map_err(|e| e.to_string())?;
            let gap = (truth - est).abs();
            if gap >= worst.0 {
                worst = (gap, format!("{name} {v}"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst.0 < 0.02 && secs < 30.0,
        format!("{} DGPs at n=1e5, max |estimate - exact| = {:.4} ({}), {secs:.1}s", names.len(), worst.0, worst.1),
    )
}

fn c2_xor() -> Check {
    let ds = fixtures::xor().sample(100_000, 7).map_err(|e| e.to_string())?;
    let ev = Evaluator::new(&ds, &brier(), &in_sample(1.0)).map_err(|e| e.to_string())?;
    let iv = |s: &str| ev.information_value(&SignalSet::parse(s)).map(|e| e.value).map_err(|e| e.to_string());
    let (a, b, both) = (iv("s1")?, iv("s2")?, iv("s1,s2")?);
    let sh = ev
        .shapley_aciv(&["s1".into(), "s2".into()], &SignalSet::empty(), ShapleyMode::Exact)
        .map_err(|e| e.to_string())?;
    let ok = a.abs() <= 0.01
        && b.abs() <= 0.01
        && (both - 0.25).abs() <= 0.01
        && sh.scores.iter().all(|s| (s - 0.125).abs() <= 0.01);
    verdict(
        ok,
        format!(
            "IV(s1) = {a:.4}, IV(s2) = {b:.4}, IV(s1,s2) = {both:.4}, Shapley = [{:.4}, {:.4}]",
            sh.scores[0], sh.scores[1]
        ),
    )
}

fn c3_weather() -> Check {
    let p = DecisionProblem::matrix(&["dry", "rain"], &["no-umbrella", "umbrella"], vec![vec![0.0, -100.0], vec![-50.0, 0.0]])
        .map_err(|e| e.to_string())?;
    let src = ExactSource::from_dgp(&fixtures::weather()).map_err(|e| e.to_string())?;
    let r0 = rational_payoff(&src, &p, &SignalSet::empty()).map_err(|e| e.to_string())?;
    let iv = information_value(&src, &p, &SignalSet::new(["forecast"])).map_err(|e| e.to_string())?;
    let steps = 30_000;
    let switch = (0..=steps)
        .map(|k| k as f64 / steps as f64)
        .find(|&q| p.rational_decision(&Belief::new(vec![1.0 - q, q]).unwrap()) == 1)
        .unwrap_or(f64::NAN);
    let ok = r0 == -20.0 && iv == 20.0 && (switch - 1.0 / 3.0).abs() <= 1.0 / steps as f64 + 1e-12;
    verdict(ok, format!("R(empty) = {r0}, IV(forecast) = {iv}, umbrella from P(rain) = {switch:.5}"))
}

fn c4_brier_baseline() -> Check {
    let src = ExactSource::from_dgp(&fixtures::xor()).map_err(|e| e.to_string())?;
    let r0 = rational_payoff(&src, &brier(), &SignalSet::empty()).map_err(|e| e.to_string())?;
    verdict((r0 - 0.75).abs() < 1e-15, format!("R(empty) = {r0} under the uniform prior"))
}

/// Every realization of the fixture's signals as code vectors.
fn realizations(cards: &[usize]) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    for &c in cards {
        out = out.into_iter().flat_map(|p| (0..c as u32).map(move |v| [p.clone(), vec![v]].concat())).collect();
    }
    out
}

fn c5_iliv_maximization() -> Check {
    let p = brier();
    let (mut groups, mut empty_groups, mut comparisons, mut skipped, mut violations) = (0, 0, 0, 0, Vec::new());
    for (k, name) in fixtures::NAMES.iter().enumerate() {
        let dgp = fixtures::by_name(name).unwrap();
        let signals = SignalSet::new(columns(&dgp, NodeRole::Signal));
        let agent = SignalSet::new(columns(&dgp, NodeRole::Agent));
        let cards: Vec<usize> = signals
            .iter()
            .map(|s| dgp.nodes().iter().find(|n| n.name == s).unwrap().values.len())
            .collect();
        let exact = ExactSource::from_dgp(&dgp).map_err(|e| e.to_string())?;
        let ds = dgp.sample(20_000, 500 + k as u64).map_err(|e| e.to_string())?;
        let src = EmpiricalSource::new(&ds, &in_sample(0.0)).map_err(|e| e.to_string())?;
        for v in realizations(&cards) {
            let Ok(own) = exact_iliv(&exact, &p, &signals, &v, &v, &agent) else {
                empty_groups += 1;
                continue;
            };
            groups += 1;
            let group = IlivEvaluator::from_codes(&src, &p, &signals, &v, &agent).ok();
            let own_est = group.as_ref().map(|g| g.iliv(&v)).transpose().map_err(|e| e.to_string())?;
            for w in realizations(&cards) {
                comparisons += 1;
                match exact_iliv(&exact, &p, &signals, &v, &w, &agent) {
                    Ok(x) if x > own + 1e-12 => violations.push(format!("{name} exact v={v:?} v'={w:?}")),
                    Ok(_) => {}
                    Err(_) => skipped += 1,
                }
                if let (Some(g), Some(o)) = (&group, own_est) {
                    if g.iliv(&w).map_err(|e| e.to_string())? > o + 1e-12 {
                        violations.push(format!("{name} estimate v={v:?} v'={w:?}"));
                    }
                }
            }
        }
    }
    verdict(
        violations.is_empty(),
        format!(
            "{groups} groups ({empty_groups} zero-probability groups skipped), {comparisons} counterfactuals, {} violations, {skipped} unreachable (v', Db) cells skipped{}",
            violations.len(),
            violations.first().map(|v| format!(", first: {v}")).unwrap_or_default()
        ),
    )
}

fn linear(features: &[String], weights: Vec<f64>) -> LinearModel {
    let names: Vec<&str> = features.iter().map(String::as_str).collect();
    LinearModel::new(&names, weights, 0.02, Link::Identity).unwrap()
}

fn c6_iliv_shap() -> Check {
    let p = brier();
    let mut max_eff: f64 = 0.0;
    let mut max_sym: f64 = 0.0;
    for (k, name) in ["noisy-six", "noisy-signals-agent", "xor-agent", "garbling-chain"].iter().enumerate() {
        let dgp = fixtures::by_name(name).unwrap();
        let ds = dgp.sample(2000, 40 + k as u64).map_err(|e| e.to_string())?;
        let first = ds.column(0).clone();
        let dup = Column::categorical(&format!("{}_dup", first.name()), Role::Signal, first.labels().to_vec(), first.codes().to_vec())
            .map_err(|e| e.to_string())?;
        let ds: Dataset = ds.with_column(dup).map_err(|e| e.to_string())?;
        let features: Vec<String> = ds.columns().iter().map(|c| c.name().to_string()).collect();
        let m = features.len();
        let mut weights: Vec<f64> = (0..m).map(|i| 0.3 / (i + 1) as f64).collect();
        weights[m - 1] = weights[0];
        let model = linear(&features, weights);
        let rows = feature_rows(&ds, &features).map_err(|e| e.to_string())?;
        let explainer = Explainer::new(&model, rows.clone()).map_err(|e| e.to_string())?;
        let iliv = IlivShapExplainer::new(explainer, &ds, &rows, &p, &SignalSet::empty(), &in_sample(1.0), IlivShapExplainer::default_grid())
            .map_err(|e| e.to_string())?;
        for x in rows.iter().take(4) {
            let shap = iliv.explainer().shap_exact(x).map_err(|e| e.to_string())?;
            let a = iliv.exact(x).map_err(|e| e.to_string())?;
            max_eff = max_eff.max(a.efficiency_gap().abs()).max(shap.efficiency_gap().abs());
            max_sym = max_sym.max((a.scores[0] - a.scores[m - 1]).abs());
        }
    }

    let start = Instant::now();
    let dgp = fixtures::by_name("noisy-six").unwrap();
    let ds = dgp.sample(3000, 77).map_err(|e| e.to_string())?;
    let features: Vec<String> = (1..=6).map(|i| format!("s{i}")).collect();
    let model = linear(&features, vec![0.3, 0.25, 0.2, 0.1, 0.05, 0.05]);
    let rows = feature_rows(&ds, &features).map_err(|e| e.to_string())?;
    let background: Vec<Vec<f64>> = rows.iter().step_by(15).cloned().collect();
    let explainer = Explainer::new(&model, background).map_err(|e| e.to_string())?;
    let iliv = IlivShapExplainer::new(explainer, &ds, &rows, &p, &SignalSet::empty(), &in_sample(1.0), IlivShapExplainer::default_grid())
        .map_err(|e| e.to_string())?;
    let spec = PermutationSpec { permutations: 2000, seed: 5, antithetic: true };
    let mut worst_ratio: f64 = 0.0;
    let mut within = true;
    for x in rows.iter().take(3) {
        let exact = iliv.exact(x).map_err(|e| e.to_string())?;
        let approx = iliv.permutation(x, &spec).map_err(|e| e.to_string())?;
        let se = approx.standard_errors.clone().unwrap_or_default();
        for i in 0..6 {
            let gap = (exact.scores[i] - approx.scores[i]).abs();
            within &= gap <= 3.0 * se[i] + 1e-9;
            if se[i] > 0.0 {
                worst_ratio = worst_ratio.max(gap / se[i]);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        max_eff <= 1e-6 && max_sym <= 1e-6 && within && secs < 60.0,
        format!(
            "max efficiency gap {max_eff:.2e}, max duplicate-feature gap {max_sym:.2e}, permutation B=2000 m=6 worst |gap|/SE = {worst_ratio:.2} in {secs:.1}s"
        ),
    )
}

fn c7_blackwell() -> Check {
    let chains = [
        fixtures::garbling_chain(0.5, (0.1, 0.1), (0.1, 0.1), (0.1, 0.1)),
        fixtures::garbling_chain(0.3, (0.05, 0.2), (0.15, 0.05), (0.1, 0.3)),
        fixtures::garbling_chain(0.7, (0.2, 0.1), (0.05, 0.05), (0.25, 0.1)),
    ];
    let sets = [SignalSet::new(["A"]), SignalSet::new(["B"]), SignalSet::new(["C"])];
    let mut worst = f64::NEG_INFINITY;
    let mut ordered = 0;
    for dgp in &chains {
        let src = ExactSource::from_dgp(dgp).map_err(|e| e.to_string())?;
        let r = sweep(&src, &sets, None, &MuGrid::default()).map_err(|e| e.to_string())?;
        for (finer, coarser) in [(0, 1), (1, 2), (0, 2)] {
            for (a, b) in r.series[finer].values.iter().zip(&r.series[coarser].values) {
                worst = worst.max(b - a);
            }
        }
        let m = dominance_matrix(&r, Some(1e-9)).map_err(|e| e.to_string())?;
        if m.total_order().as_deref() == Some(&sets[..]) {
            ordered += 1;
        }
    }
    verdict(
        worst <= 1e-9 && ordered == chains.len(),
        format!("max excess of garbled over original payoff {worst:.2e} on 99 kinks, {ordered}/3 chains ordered A > B > C"),
    )
}

fn c8_regret_bound() -> Check {
    let estimators = [
        ("frequency", in_sample(0.0)),
        ("frequency-smoothed", in_sample(1.0)),
        ("frequency-crossfit", ModelSpec::cross_fit(EstimatorSpec::frequency(1.0), 5, 3)),
        ("glm", ModelSpec::in_sample(EstimatorSpec::Glm { epochs: 200, learning_rate: 0.5, seed: 1 })),
        ("glm-crossfit", ModelSpec::cross_fit(EstimatorSpec::Glm { epochs: 200, learning_rate: 0.5, seed: 1 }, 5, 3)),
    ];
    let problems = [brier(), DecisionProblem::v_shaped(0.3, 1.0).unwrap()];
    let (mut checks, mut violations) = (0, Vec::new());
    let mut tightest = f64::INFINITY;
    for (k, name) in fixtures::NAMES.iter().enumerate() {
        let dgp = fixtures::by_name(name).unwrap();
        let ds = dgp.sample(4000, 900 + k as u64).map_err(|e| e.to_string())?;
        let visible = SignalSet::new(dgp.visible_columns().into_iter().filter(|c| ds.column_index(c).is_ok()));
        for (label, spec) in &estimators {
            let fitted = EmpiricalSource::new(&ds, spec).and_then(|s| s.fit(&visible)).map_err(|e| e.to_string())?;
            let beliefs = fitted.row_beliefs(&ds);
            for p in &problems {
                let r = regret_bound_check(&beliefs, &ds, p, 10).map_err(|e| e.to_string())?;
                checks += 1;
                tightest = tightest.min(r.regret_bound - r.swap_regret);
                if !r.bound_holds {
                    violations.push(format!("{name}/{label}"));
                }
            }
        }
    }
    verdict(
        violations.is_empty(),
        format!(
            "{checks} fixture x estimator x problem checks, {} violations, smallest slack {tightest:.2e}",
            violations.len()
        ),
    )
}

fn c9_greedy_vs_shapley() -> Check {
    let p = brier();
    let mut consistent = Vec::new();
    let mut inconsistent = Vec::new();
    let mut not_submodular = Vec::new();
    for name in fixtures::NAMES {
        let dgp = fixtures::by_name(name).unwrap();
        let signals = columns(&dgp, NodeRole::Signal);
        let n = signals.len();
        if !(2..=6).contains(&n) {
            continue;
        }
        let agent = SignalSet::new(columns(&dgp, NodeRole::Agent));
        let src = ExactSource::from_dgp(&dgp).map_err(|e| e.to_string())?;
        let value: Vec<f64> = (0..1u64 << n)
            .map(|mask| {
                let set = SignalSet::new((0..n).filter(|i| mask >> i & 1 == 1).map(|i| signals[i].clone()));
                aciv(&src, &p, &set, &agent)
            })
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let submodular = (0..1usize << n).all(|t| {
            (0..1usize << n).filter(|s| s & t == *s).all(|s| {
                (0..n).filter(|i| t >> i & 1 == 0).all(|i| {
                    value[s | 1 << i] - value[s] >= value[t | 1 << i] - value[t] - 1e-12
                })
            })
        });
        if !submodular {
            not_submodular.push(*name);
            continue;
        }
        let shapley = shapley_aciv(&src, &p, &signals, &agent, ShapleyMode::Exact).map_err(|e| e.to_string())?;
        let greedy = greedy_aciv(&src, &p, &signals, &agent).map_err(|e| e.to_string())?;
        let score = |s: &str| shapley.scores[signals.iter().position(|x| x == s).unwrap()];
        let ok = greedy.order.windows(2).all(|w| score(&w[0]) >= score(&w[1]) - 1e-9);
        if ok {
            consistent.push(*name);
        } else {
            inconsistent.push(*name);
        }
    }
    verdict(
        inconsistent.is_empty() && !consistent.is_empty(),
        format!(
            "consistent on {consistent:?}, inconsistent on {inconsistent:?}, submodularity fails on {not_submodular:?}"
        ),
    )
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_infoval"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).lines().filter(|l| !l.contains("wall_time_seconds")).collect::<Vec<_>>().join("\n"))
}

fn c10_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    std::fs::write(
        d.join("explain.toml"),
        "seed = 3\n[data]\npath = \"six.csv\"\n[analysis.explain]\nmodel = { type = \"linear\", features = [\"s1\", \"s2\", \"s3\", \"s4\", \"s5\", \"s6\"], weights = [0.3, 0.25, 0.2, 0.1, 0.05, 0.05] }\ninstances = [0, 1]\nbackground = 100\n",
    )
    .map_err(|e| e.to_string())?;
    let suite: Vec<Vec<&str>> = vec![
        vec!["simulate", "--fixture", "noisy-six", "--n", "2000", "--seed", "8", "--out", "six.csv"],
        vec!["simulate", "--fixture", "noisy-signals-agent", "--n", "3000", "--seed", "9", "--out", "n.csv"],
        vec!["iv", "--data", "n.csv", "--signals", "s1,s2", "--bootstrap", "50", "--seed", "1"],
        vec!["aciv", "--data", "n.csv", "--signals", "s1", "--agent", "a", "--bootstrap", "50", "--seed", "1"],
        vec!["iliv", "--data", "n.csv", "--actual", "s1=1", "--counterfactual", "s1=0", "--agent", "a", "--bootstrap", "20", "--seed", "2"],
        vec!["shapley", "--data", "n.csv", "--signals", "s1,s2", "--agent", "a", "--mode", "greedy"],
        vec!["--config", "explain.toml", "explain", "--method", "permutation", "--permutations", "300"],
        vec!["robustness", "--data", "n.csv", "--sets", "s1;s2", "--mu-step", "0.05", "--bootstrap", "20", "--seed", "4"],
        vec!["diagnose", "--data", "n.csv", "--signals", "s1,s2,a"],
    ];
    let mut runs: Vec<Vec<String>> = Vec::new();
    for _ in 0..2 {
        let mut reports = Vec::new();
        for args in &suite {
            reports.push(run_cli(d, args)?);
        }
        let mut data = BTreeMap::new();
        for f in ["six.csv", "n.csv", "six.schema.json", "n.schema.json"] {
            data.insert(f, std::fs::read(d.join(f)).map_err(|e| e.to_string())?);
        }
        reports.push(format!("{data:?}"));
        runs.push(reports);
    }
    let same = runs[0] == runs[1];
    verdict(same, format!("{} reports and 4 data files compared across two runs, identical = {same}", suite.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("oracle equivalence", c1_oracle_equivalence),
        ("XOR complementarity", c2_xor),
        ("weather payoffs", c3_weather),
        ("Brier no-information baseline", c4_brier_baseline),
        ("ILIV maximization", c5_iliv_maximization),
        ("ILIV-SHAP axioms", c6_iliv_shap),
        ("Blackwell dominance", c7_blackwell),
        ("ECE-regret bound", c8_regret_bound),
        ("greedy vs exact Shapley", c9_greedy_vs_shapley),
        ("determinism", c10_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
