//! Small processes with hand-checkable posteriors, shared by tests, the
//! acceptance suite and `infoval simulate --fixture`.

use super::{Node, NodeRole, SyntheticDgp};

const BIT: &[&str] = &["0", "1"];

fn uniform_bit(name: &str, role: NodeRole) -> Node {
    Node::new(name, role, BIT, &[], vec![vec![0.5, 0.5]])
}

fn state_prior(name: &str, p1: f64) -> Node {
    Node::new(name, NodeRole::State, BIT, &[], vec![vec![1.0 - p1, p1]])
}

/// Binary symmetric channel that flips its input with probability `flip`.
pub fn bsc_channel(flip: f64) -> Vec<Vec<f64>> {
    vec![vec![1.0 - flip, flip], vec![flip, 1.0 - flip]]
}

/// Binary channel with separate error rates: `P(1|0) = false_pos`, `P(0|1) = false_neg`.
pub fn binary_channel(false_pos: f64, false_neg: f64) -> Vec<Vec<f64>> {
    vec![vec![1.0 - false_pos, false_pos], vec![false_neg, 1.0 - false_neg]]
}

fn finish(name: &str, nodes: Vec<Node>) -> SyntheticDgp {
    SyntheticDgp::new(name, nodes).expect("fixture is well formed")
}

/// Two uniform bits `s1`, `s2` and state `y = s1 XOR s2`.
pub fn xor() -> SyntheticDgp {
    finish(
        "xor",
        vec![
            uniform_bit("s1", NodeRole::Signal),
            uniform_bit("s2", NodeRole::Signal),
            Node::new(
                "y",
                NodeRole::State,
                BIT,
                &["s1", "s2"],
                vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]],
            ),
        ],
    )
}

/// [`xor`] plus an agent `a` whose decision copies `s1`.
pub fn xor_with_agent() -> SyntheticDgp {
    let mut nodes = xor().nodes;
    nodes.push(Node::new("a", NodeRole::Agent, BIT, &["s1"], bsc_channel(0.0)));
    finish("xor-agent", nodes)
}

/// State with `P(y=1) = p1`, one signal `s` that flips it with probability `flip`.
pub fn bsc(p1: f64, flip: f64) -> SyntheticDgp {
    finish(
        "bsc",
        vec![state_prior("y", p1), Node::new("s", NodeRole::Signal, BIT, &["y"], bsc_channel(flip))],
    )
}

/// Conditionally independent binary signals `s1..sk`, signal `j` flipping the
/// state with probability `flips[j]`.
pub fn noisy_signals(p1: f64, flips: &[f64]) -> SyntheticDgp {
    let mut nodes = vec![state_prior("y", p1)];
    for (j, f) in flips.iter().enumerate() {
        nodes.push(Node::new(&format!("s{}", j + 1), NodeRole::Signal, BIT, &["y"], bsc_channel(*f)));
    }
    finish("noisy-signals", nodes)
}

/// [`noisy_signals`] plus an agent `a` that observes the state through a
/// binary symmetric channel with flip probability `agent_flip`.
pub fn noisy_signals_with_agent(p1: f64, flips: &[f64], agent_flip: f64) -> SyntheticDgp {
    let mut nodes = noisy_signals(p1, flips).nodes;
    nodes.push(Node::new("a", NodeRole::Agent, BIT, &["y"], bsc_channel(agent_flip)));
    finish("noisy-signals-agent", nodes)
}

/// Agent `a` sees a noisy version of signal `s1`; `s2` is an independent
/// noisy view of the state. Both signals carry information the agent lacks.
pub fn agent_follows_signal(p1: f64, flips: [f64; 2], agent_noise: f64) -> SyntheticDgp {
    let mut nodes = noisy_signals(p1, &flips).nodes;
    nodes.push(Node::new("a", NodeRole::Agent, BIT, &["s1"], bsc_channel(agent_noise)));
    finish("agent-follows-signal", nodes)
}

/// Three-valued signal with a three-valued agent decision and a full-support
/// joint, for instance-level tests that need every `(v', a)` pair reachable.
pub fn ternary_with_agent() -> SyntheticDgp {
    let levels = &["low", "mid", "high"];
    finish(
        "ternary-agent",
        vec![
            state_prior("y", 0.4),
            Node::new(
                "s",
                NodeRole::Signal,
                levels,
                &["y"],
                vec![vec![0.6, 0.3, 0.1], vec![0.15, 0.35, 0.5]],
            ),
            Node::new(
                "a",
                NodeRole::Agent,
                levels,
                &["s", "y"],
                vec![
                    vec![0.7, 0.2, 0.1],
                    vec![0.5, 0.3, 0.2],
                    vec![0.2, 0.6, 0.2],
                    vec![0.2, 0.4, 0.4],
                    vec![0.2, 0.2, 0.6],
                    vec![0.1, 0.2, 0.7],
                ],
            ),
        ],
    )
}

/// Garbling chain `A -> B -> C`: `A` views the state through a binary
/// channel, `B` post-processes `A`, `C` post-processes `B`.
pub fn garbling_chain(p1: f64, base: (f64, f64), first: (f64, f64), second: (f64, f64)) -> SyntheticDgp {
    let dgp = finish(
        "garbling-chain",
        vec![
            state_prior("y", p1),
            Node::new("A", NodeRole::Signal, BIT, &["y"], binary_channel(base.0, base.1)),
        ],
    );
    dgp.with_garbled_copy("A", "B", &binary_channel(first.0, first.1))
        .and_then(|d| d.with_garbled_copy("B", "C", &binary_channel(second.0, second.1)))
        .expect("fixture is well formed")
}

/// Two signals with opposite error profiles: `fp` only produces false
/// positives, `fn` only false negatives. Their payoff curves over V-shaped
/// rules cross, so neither dominates.
pub fn asymmetric_channels(p1: f64, error: f64) -> SyntheticDgp {
    finish(
        "asymmetric-channels",
        vec![
            state_prior("y", p1),
            Node::new("fp", NodeRole::Signal, BIT, &["y"], binary_channel(error, 0.0)),
            Node::new("fn", NodeRole::Signal, BIT, &["y"], binary_channel(0.0, error)),
        ],
    )
}

/// Weather example: state rain/dry with `P(rain) = 0.2`, a perfect forecast
/// `forecast` and an uninformative `noise` bit.
pub fn weather() -> SyntheticDgp {
    finish(
        "weather",
        vec![
            Node::new("y", NodeRole::State, &["dry", "rain"], &[], vec![vec![0.8, 0.2]]),
            Node::new("forecast", NodeRole::Signal, &["dry", "rain"], &["y"], bsc_channel(0.0)),
            uniform_bit("noise", NodeRole::Signal),
        ],
    )
}

/// Every named fixture with default parameters.
pub fn by_name(name: &str) -> Option<SyntheticDgp> {
    Some(match name {
        "xor" => xor(),
        "xor-agent" => xor_with_agent(),
        "bsc" => bsc(0.5, 0.1),
        "noisy-signals" => noisy_signals(0.4, &[0.1, 0.2, 0.3]),
        "noisy-six" => noisy_signals(0.4, &[0.1, 0.15, 0.2, 0.25, 0.3, 0.35]),
        "noisy-signals-agent" => noisy_signals_with_agent(0.4, &[0.1, 0.25], 0.2),
        "agent-follows-signal" => agent_follows_signal(0.5, [0.1, 0.2], 0.1),
        "ternary-agent" => ternary_with_agent(),
        "garbling-chain" => garbling_chain(0.5, (0.1, 0.1), (0.1, 0.1), (0.1, 0.1)),
        "asymmetric-channels" => asymmetric_channels(0.5, 0.4),
        "weather" => weather(),
        _ => return None,
    })
}

pub const NAMES: &[&str] = &[
    "xor",
    "xor-agent",
    "bsc",
    "noisy-signals",
    "noisy-six",
    "noisy-signals-agent",
    "agent-follows-signal",
    "ternary-agent",
    "garbling-chain",
    "asymmetric-channels",
    "weather",
];
