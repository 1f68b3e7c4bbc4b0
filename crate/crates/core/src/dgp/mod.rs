//! Synthetic data-generating processes with exact posteriors.
//!
//! A process is a discrete Bayesian network: nodes listed in topological
//! order, each with a conditional probability table indexed by the joint
//! configuration of its parents (mixed radix, last parent varying fastest).
//! Exactly one node is the payoff-relevant state; `hidden` nodes are
//! marginalized out of everything the analyst sees.

pub mod fixtures;

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Column, ColumnConfig, ColumnKind, Dataset, JointDistribution, Role, Schema};
use crate::decision::Belief;
use crate::error::{Error, Result};

/// Upper bound on the number of joint configurations enumerated exactly.
const MAX_CONFIGURATIONS: usize = 1 << 22;
const CPT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeRole {
    Signal,
    Agent,
    State,
    Hidden,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub name: String,
    pub role: NodeRole,
    pub values: Vec<String>,
    #[serde(default)]
    pub parents: Vec<String>,
    /// One distribution over `values` per parent configuration.
    pub cpt: Vec<Vec<f64>>,
}

impl Node {
    pub fn new(name: &str, role: NodeRole, values: &[&str], parents: &[&str], cpt: Vec<Vec<f64>>) -> Self {
        Self {
            name: name.into(),
            role,
            values: values.iter().map(|s| s.to_string()).collect(),
            parents: parents.iter().map(|s| s.to_string()).collect(),
            cpt,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DgpSpec {
    #[serde(default)]
    name: String,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DgpSpec", into = "DgpSpec")]
pub struct SyntheticDgp {
    name: String,
    nodes: Vec<Node>,
    parents: Vec<Vec<usize>>,
    state: usize,
}

impl TryFrom<DgpSpec> for SyntheticDgp {
    type Error = Error;

    fn try_from(spec: DgpSpec) -> Result<Self> {
        Self::new(&spec.name, spec.nodes)
    }
}

impl From<SyntheticDgp> for DgpSpec {
    fn from(d: SyntheticDgp) -> Self {
        DgpSpec { name: d.name, nodes: d.nodes }
    }
}

impl SyntheticDgp {
    pub fn new(name: &str, nodes: Vec<Node>) -> Result<Self> {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut parents = Vec::with_capacity(nodes.len());
        let mut state = None;
        for (i, node) in nodes.iter().enumerate() {
            if node.values.is_empty() {
                return Err(Error::Schema(format!("node {:?} has no values", node.name)));
            }
            let mut pidx = Vec::new();
            for p in &node.parents {
                let j = *index.get(p.as_str()).ok_or_else(|| {
                    Error::Schema(format!(
                        "node {:?}: parent {p:?} must be declared earlier",
                        node.name
                    ))
                })?;
                pidx.push(j);
            }
            let configs: usize = pidx.iter().map(|&j| nodes[j].values.len()).product();
            if node.cpt.len() != configs {
                return Err(Error::Schema(format!(
                    "node {:?}: {} CPT rows, expected {configs}",
                    node.name,
                    node.cpt.len()
                )));
            }
            for row in &node.cpt {
                if row.len() != node.values.len() {
                    return Err(Error::Schema(format!(
                        "node {:?}: CPT row has {} entries, expected {}",
                        node.name,
                        row.len(),
                        node.values.len()
                    )));
                }
                let total: f64 = row.iter().sum();
                if row.iter().any(|p| !(p.is_finite() && *p >= 0.0))
                    || (total - 1.0).abs() > CPT_TOLERANCE
                {
                    return Err(Error::Domain(format!(
                        "node {:?}: CPT row {row:?} is not a distribution",
                        node.name
                    )));
                }
            }
            if node.role == NodeRole::State {
                if state.is_some() {
                    return Err(Error::Schema("more than one state node".into()));
                }
                if node.values.len() < 2 {
                    return Err(Error::Domain("state node needs at least two values".into()));
                }
                state = Some(i);
            }
            if index.insert(node.name.as_str(), i).is_some() {
                return Err(Error::Schema(format!("duplicate node {:?}", node.name)));
            }
            parents.push(pidx);
        }
        let state = state.ok_or_else(|| Error::Schema("missing state node".into()))?;
        Ok(Self { name: name.into(), nodes, parents, state })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn state_node(&self) -> &Node {
        &self.nodes[self.state]
    }

    fn visible(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| matches!(self.nodes[i].role, NodeRole::Signal | NodeRole::Agent))
            .collect()
    }

    /// Names of the observable signal and agent columns, in node order.
    pub fn visible_columns(&self) -> Vec<String> {
        self.visible().into_iter().map(|i| self.nodes[i].name.clone()).collect()
    }

    fn node_index(&self, name: &str) -> Result<usize> {
        self.nodes
            .iter()
            .position(|n| n.name == name)
            .ok_or_else(|| Error::Schema(format!("unknown node {name:?}")))
    }

    fn cpt_row(&self, node: usize, codes: &[u32]) -> usize {
        self.parents[node]
            .iter()
            .fold(0, |acc, &p| acc * self.nodes[p].values.len() + codes[p] as usize)
    }

    /// Exact joint over the visible columns and the state.
    pub fn joint(&self) -> Result<JointDistribution> {
        let configs = self
            .nodes
            .iter()
            .try_fold(1usize, |acc, n| acc.checked_mul(n.values.len()))
            .unwrap_or(usize::MAX);
        if configs > MAX_CONFIGURATIONS {
            return Err(Error::Budget(format!(
                "{configs} joint configurations exceed the exact-enumeration budget"
            )));
        }
        let visible = self.visible();
        let mut cells: BTreeMap<Vec<u32>, Vec<f64>> = BTreeMap::new();
        let mut codes = vec![0u32; self.nodes.len()];
        self.enumerate(0, 1.0, &mut codes, &mut |codes, p| {
            let key: Vec<u32> = visible.iter().map(|&i| codes[i]).collect();
            let n_states = self.nodes[self.state].values.len();
            cells.entry(key).or_insert_with(|| vec![0.0; n_states])[codes[self.state] as usize] += p;
        });
        JointDistribution::from_masses(
            visible.iter().map(|&i| self.nodes[i].name.clone()).collect(),
            visible.iter().map(|&i| self.nodes[i].values.len()).collect(),
            self.nodes[self.state].values.len(),
            cells,
        )
    }

    fn enumerate(&self, i: usize, p: f64, codes: &mut [u32], visit: &mut dyn FnMut(&[u32], f64)) {
        if p == 0.0 {
            return;
        }
        if i == self.nodes.len() {
            visit(codes, p);
            return;
        }
        let row = self.cpt_row(i, codes);
        for (v, q) in self.nodes[i].cpt[row].iter().enumerate() {
            codes[i] = v as u32;
            self.enumerate(i + 1, p * q, codes, visit);
        }
        codes[i] = 0;
    }

    /// `P(ω | conditioning)` by exact enumeration. Conditioning on a hidden
    /// or state node is rejected.
    pub fn exact_posterior(&self, conditioning: &[(&str, u32)]) -> Result<Belief> {
        let joint = self.joint()?;
        let mut cols = Vec::new();
        let mut values = Vec::new();
        for (name, v) in conditioning {
            cols.push(joint.column_index(name)?);
            values.push(*v);
        }
        joint.posterior(&cols, &values)
    }

    /// Replaces `signal` by its post-processing through `channel` (rows indexed
    /// by the original value). The original becomes hidden; nodes that
    /// depended on it keep seeing the original value.
    pub fn garble(&self, signal: &str, channel: &[Vec<f64>]) -> Result<Self> {
        let i = self.node_index(signal)?;
        let original = &self.nodes[i];
        if !matches!(original.role, NodeRole::Signal | NodeRole::Agent) {
            return Err(Error::Schema(format!("{signal:?} is not an observable signal")));
        }
        let hidden_name = format!("{signal}#original");
        let garbled = self.channel_node(original, &hidden_name, signal, original.role, channel)?;
        let mut nodes = self.nodes.clone();
        nodes[i].name = hidden_name.clone();
        nodes[i].role = NodeRole::Hidden;
        for node in nodes.iter_mut().skip(i + 1) {
            for p in node.parents.iter_mut() {
                if p == signal {
                    *p = hidden_name.clone();
                }
            }
        }
        nodes.insert(i + 1, garbled);
        Self::new(&self.name, nodes)
    }

    /// Adds `new_name`, a post-processing of `signal` through `channel`,
    /// keeping the original observable.
    pub fn with_garbled_copy(&self, signal: &str, new_name: &str, channel: &[Vec<f64>]) -> Result<Self> {
        let i = self.node_index(signal)?;
        let original = &self.nodes[i];
        let node = self.channel_node(original, signal, new_name, NodeRole::Signal, channel)?;
        let mut nodes = self.nodes.clone();
        nodes.push(node);
        Self::new(&self.name, nodes)
    }

    fn channel_node(
        &self,
        original: &Node,
        parent: &str,
        name: &str,
        role: NodeRole,
        channel: &[Vec<f64>],
    ) -> Result<Node> {
        if channel.len() != original.values.len() {
            return Err(Error::Schema(format!(
                "channel has {} rows, signal {:?} has {} values",
                channel.len(),
                original.name,
                original.values.len()
            )));
        }
        let width = channel[0].len();
        if width == 0 || channel.iter().any(|r| r.len() != width) {
            return Err(Error::Schema("channel rows differ in length".into()));
        }
        let values = if width == original.values.len() {
            original.values.clone()
        } else {
            (0..width).map(|k| k.to_string()).collect()
        };
        Ok(Node {
            name: name.into(),
            role,
            values,
            parents: vec![parent.into()],
            cpt: channel.to_vec(),
        })
    }

    /// `n` i.i.d. rows by ancestral sampling; deterministic given `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::Domain("sample size must be at least 1".into()));
        }
        let cumulative: Vec<Vec<Vec<f64>>> = self
            .nodes
            .iter()
            .map(|node| {
                node.cpt
                    .iter()
                    .map(|row| {
                        row.iter()
                            .scan(0.0, |acc, p| {
                                *acc += p;
                                Some(*acc)
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut columns: Vec<Vec<u32>> = vec![Vec::with_capacity(n); self.nodes.len()];
        let mut codes = vec![0u32; self.nodes.len()];
        for _ in 0..n {
            for i in 0..self.nodes.len() {
                let r = self.cpt_row(i, &codes);
                let u: f64 = rng.gen();
                let v = cumulative[i][r].iter().position(|c| u < *c).unwrap_or_else(|| {
                    // rounding left the last cumulative entry below u
                    let probs = &self.nodes[i].cpt[r];
                    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
                });
                codes[i] = v as u32;
                columns[i].push(v as u32);
            }
        }
        let mut builder = Dataset::builder();
        for (i, codes) in columns.into_iter().enumerate() {
            let node = &self.nodes[i];
            let role = match node.role {
                NodeRole::Signal => Role::Signal,
                NodeRole::Agent => Role::Agent,
                NodeRole::State => Role::State,
                NodeRole::Hidden => continue,
            };
            let column = Column::categorical(&node.name, role, node.values.clone(), codes)?;
            builder = if role == Role::State {
                builder.state_column(column)
            } else {
                builder.column(column)
            };
        }
        builder.build()
    }

    /// Ingestion schema matching [`SyntheticDgp::sample`] output written as CSV.
    pub fn schema(&self) -> Schema {
        let columns = self
            .nodes
            .iter()
            .filter_map(|node| {
                let role = match node.role {
                    NodeRole::Signal => Role::Signal,
                    NodeRole::Agent => Role::Agent,
                    NodeRole::State => Role::State,
                    NodeRole::Hidden => return None,
                };
                Some(ColumnConfig {
                    name: node.name.clone(),
                    role,
                    kind: ColumnKind::Categorical,
                    values: Some(node.values.clone()),
                    binning: None,
                })
            })
            .collect();
        Schema { columns, dgp: Some(self.clone()) }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures;
    use super::*;

    #[test]
    fn xor_posteriors() {
        let dgp = fixtures::xor();
        let b = dgp.exact_posterior(&[("s1", 1)]).unwrap();
        assert!((b.p1() - 0.5).abs() < 1e-12);
        let b = dgp.exact_posterior(&[("s1", 1), ("s2", 0)]).unwrap();
        assert_eq!(b.probs(), &[0.0, 1.0]);
    }

    #[test]
    fn bsc_posterior() {
        let dgp = fixtures::bsc(0.5, 0.1);
        let b = dgp.exact_posterior(&[("s", 1)]).unwrap();
        assert!((b.probs()[0] - 0.1).abs() < 1e-12);
        assert!((b.probs()[1] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_conditioning() {
        let dgp = fixtures::xor_with_agent();
        // the agent copies s1, so (s1=0, a=1) never happens
        let err = dgp.exact_posterior(&[("s1", 0), ("a", 1)]).unwrap_err();
        assert!(matches!(err, Error::UndefinedPosterior(_)));
    }

    #[test]
    fn garble_composes_channels() {
        let dgp = fixtures::bsc(0.5, 0.1);
        let g = dgp.garble("s", &fixtures::bsc_channel(0.2)).unwrap();
        let b = g.exact_posterior(&[("s", 1)]).unwrap();
        assert!((b.probs()[0] - 0.26).abs() < 1e-12);
    }

    #[test]
    fn identity_garble_keeps_distribution() {
        let dgp = fixtures::bsc(0.3, 0.15);
        let g = dgp.garble("s", &fixtures::bsc_channel(0.0)).unwrap();
        let tv = dgp.joint().unwrap().total_variation(&g.joint().unwrap()).unwrap();
        assert!(tv < 1e-15);
    }

    #[test]
    fn constant_garble_is_uninformative() {
        let dgp = fixtures::bsc(0.3, 0.15);
        let g = dgp.garble("s", &[vec![1.0], vec![1.0]]).unwrap();
        let b = g.exact_posterior(&[("s", 0)]).unwrap();
        assert!((b.p1() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn garble_dimension_mismatch() {
        let dgp = fixtures::bsc(0.5, 0.1);
        assert!(matches!(dgp.garble("s", &[vec![1.0]]), Err(Error::Schema(_))));
    }

    #[test]
    fn bad_cpt_rejected() {
        let nodes = vec![Node::new("y", NodeRole::State, &["0", "1"], &[], vec![vec![0.5, 0.6]])];
        assert!(SyntheticDgp::new("bad", nodes).is_err());
        let nodes = vec![Node::new("y", NodeRole::State, &["0", "1"], &["x"], vec![vec![0.5, 0.5]])];
        assert!(SyntheticDgp::new("bad", nodes).is_err());
    }

    #[test]
    fn sample_is_deterministic() {
        let dgp = fixtures::xor();
        assert!(dgp.sample(0, 1).is_err());
        let a = dgp.sample(500, 9).unwrap();
        let b = dgp.sample(500, 9).unwrap();
        assert_eq!(a.column(0).codes(), b.column(0).codes());
        assert_eq!(a.state_column().codes(), b.state_column().codes());
    }

    #[test]
    fn serde_round_trip() {
        let dgp = fixtures::xor_with_agent();
        let text = serde_json::to_string(&dgp).unwrap();
        let back: SyntheticDgp = serde_json::from_str(&text).unwrap();
        assert_eq!(dgp, back);
    }
}
