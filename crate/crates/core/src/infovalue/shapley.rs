use serde::{Deserialize, Serialize};

use super::{PosteriorSource, SignalSet};
use crate::decision::DecisionProblem;
use crate::error::{Error, Result};
use crate::game;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapleyMode {
    Exact,
    Greedy,
}

/// Per-signal split of `ACIV(all signals; Db)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyResult {
    pub mode: ShapleyMode,
    pub signals: Vec<String>,
    pub agent: SignalSet,
    /// Aligned with `signals`. Exact mode: Shapley values. Greedy mode: each
    /// signal's marginal gain at the step it was selected.
    pub scores: Vec<f64>,
    /// `ACIV(all signals; Db)`.
    pub total: f64,
    /// Greedy selection order and gains in that order.
    pub greedy: Option<GreedyResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyResult {
    pub order: Vec<String>,
    pub gains: Vec<f64>,
}

fn subset(signals: &[String], mask: game::Coalition) -> SignalSet {
    SignalSet::new(signals.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, s)| s.clone()))
}

fn check_distinct(signals: &[String]) -> Result<()> {
    let set = SignalSet::new(signals.iter().cloned());
    if set.len() != signals.len() {
        return Err(Error::Domain("signal list contains duplicates".into()));
    }
    Ok(())
}

/// Shapley decomposition of ACIV over basic signals. Coalition `T` is worth
/// `ACIV(T; Db) = R(T ∪ Db) − R(Db)`; an empty `agent` gives the split of IV.
pub fn shapley_aciv<S: PosteriorSource + ?Sized>(
    source: &S,
    problem: &DecisionProblem,
    signals: &[String],
    agent: &SignalSet,
    mode: ShapleyMode,
) -> Result<ShapleyResult> {
    check_distinct(signals)?;
    let base = source.payoff(problem, agent)?;
    match mode {
        ShapleyMode::Exact => {
            let values = game::exact(signals.len(), |mask| {
                if mask == 0 {
                    return Ok(0.0);
                }
                Ok(source.payoff(problem, &subset(signals, mask).union(agent))? - base)
            })?;
            Ok(ShapleyResult {
                mode,
                signals: signals.to_vec(),
                agent: agent.clone(),
                total: values.full_value - values.empty_value,
                scores: values.scores,
                greedy: None,
            })
        }
        ShapleyMode::Greedy => {
            let greedy = greedy_aciv(source, problem, signals, agent)?;
            let mut scores = vec![0.0; signals.len()];
            for (name, gain) in greedy.order.iter().zip(&greedy.gains) {
                let i = signals.iter().position(|s| s == name).expect("selected from the list");
                scores[i] = *gain;
            }
            let total = greedy.gains.iter().sum();
            Ok(ShapleyResult {
                mode,
                signals: signals.to_vec(),
                agent: agent.clone(),
                scores,
                total,
                greedy: Some(greedy),
            })
        }
    }
}

/// Repeatedly adds the signal with the largest `ACIV(Σj; V*)` to the
/// accumulated set `V*`, which starts as the agent columns. Ties go to the
/// earlier signal in `signals`.
pub fn greedy_aciv<S: PosteriorSource + ?Sized>(
    source: &S,
    problem: &DecisionProblem,
    signals: &[String],
    agent: &SignalSet,
) -> Result<GreedyResult> {
    check_distinct(signals)?;
    let mut acc = agent.clone();
    let mut current = source.payoff(problem, &acc)?;
    let mut remaining: Vec<usize> = (0..signals.len()).collect();
    let mut order = Vec::with_capacity(signals.len());
    let mut gains = Vec::with_capacity(signals.len());
    while !remaining.is_empty() {
        let mut best: Option<(usize, f64, f64)> = None;
        for (slot, &j) in remaining.iter().enumerate() {
            let payoff = source.payoff(problem, &acc.union(&SignalSet::new([signals[j].clone()])))?;
            let gain = payoff - current;
            if best.map_or(true, |(_, g, _)| gain > g + 1e-12 * g.abs().max(1.0)) {
                best = Some((slot, gain, payoff));
            }
        }
        let (slot, gain, payoff) = best.expect("remaining is non-empty");
        let j = remaining.remove(slot);
        acc = acc.union(&SignalSet::new([signals[j].clone()]));
        current = payoff;
        order.push(signals[j].clone());
        gains.push(gain);
    }
    Ok(GreedyResult { order, gains })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::fixtures;
    use crate::infovalue::{aciv, ExactSource};

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn xor_split_equally() {
        let src = ExactSource::from_dgp(&fixtures::xor()).unwrap();
        let p = DecisionProblem::brier(0.01).unwrap();
        let r = shapley_aciv(&src, &p, &names(&["s1", "s2"]), &SignalSet::empty(), ShapleyMode::Exact).unwrap();
        assert!((r.scores[0] - 0.125).abs() < 1e-12);
        assert!((r.scores[1] - 0.125).abs() < 1e-12);
        assert!((r.total - 0.25).abs() < 1e-12);
    }

    #[test]
    fn efficiency_and_null_player() {
        let src = ExactSource::from_dgp(&fixtures::weather()).unwrap();
        let p = DecisionProblem::brier(0.01).unwrap();
        let sig = names(&["forecast", "noise"]);
        let r = shapley_aciv(&src, &p, &sig, &SignalSet::empty(), ShapleyMode::Exact).unwrap();
        assert!(r.scores[1].abs() < 1e-12);
        let all = aciv(&src, &p, &SignalSet::new(sig.clone()), &SignalSet::empty()).unwrap();
        assert!((r.scores.iter().sum::<f64>() - all).abs() < 1e-12);
    }

    #[test]
    fn greedy_orders_by_strength() {
        let src = ExactSource::from_dgp(&fixtures::noisy_signals_with_agent(0.4, &[0.3, 0.1], 0.2)).unwrap();
        let p = DecisionProblem::brier(0.01).unwrap();
        let r = shapley_aciv(&src, &p, &names(&["s1", "s2"]), &SignalSet::new(["a"]), ShapleyMode::Greedy)
            .unwrap();
        let g = r.greedy.unwrap();
        assert_eq!(g.order, names(&["s2", "s1"]));
        assert!(g.gains[0] >= g.gains[1]);
    }

    #[test]
    fn duplicates_rejected() {
        let src = ExactSource::from_dgp(&fixtures::xor()).unwrap();
        let p = DecisionProblem::brier(0.01).unwrap();
        let r = shapley_aciv(&src, &p, &names(&["s1", "s1"]), &SignalSet::empty(), ShapleyMode::Exact);
        assert!(matches!(r, Err(Error::Domain(_))));
    }
}
