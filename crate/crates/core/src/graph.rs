//! Metric-computation DAG: node specs, validation and evaluation order.
//!
//! A graph has three node kinds. `Input` nodes are exogenous series with no
//! parents. `Learned` nodes get a fitted structural equation over their
//! parents plus configured lag orders. `Analytic` nodes are closed-form
//! functions of their parents, referenced by a registry key so the formula
//! lives in one tested place.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Input,
    Learned,
    Analytic,
}

/// Declaration of one node in the computation DAG.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    pub kind: NodeKind,
    #[serde(default)]
    pub parents: Vec<String>,
    /// Day offsets for autoregressive features; learned nodes only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lags: Vec<usize>,
    /// Registry key of the closed-form function; analytic nodes only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<String>,
    /// Counterfactual values of this node are clamped at zero (e.g. counts
    /// per query cannot go negative).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub nonnegative: bool,
}

impl NodeSpec {
    pub fn input(name: impl Into<String>) -> Self {
        NodeSpec {
            name: name.into(),
            kind: NodeKind::Input,
            parents: Vec::new(),
            lags: Vec::new(),
            function: None,
            nonnegative: false,
        }
    }

    pub fn learned(name: impl Into<String>, parents: Vec<String>, lags: Vec<usize>) -> Self {
        NodeSpec {
            name: name.into(),
            kind: NodeKind::Learned,
            parents,
            lags,
            function: None,
            nonnegative: false,
        }
    }

    pub fn analytic(
        name: impl Into<String>,
        parents: Vec<String>,
        function: impl Into<String>,
    ) -> Self {
        NodeSpec {
            name: name.into(),
            kind: NodeKind::Analytic,
            parents,
            lags: Vec::new(),
            function: Some(function.into()),
            nonnegative: false,
        }
    }

    pub fn with_nonnegative(mut self, yes: bool) -> Self {
        self.nonnegative = yes;
        self
    }
}

/// Validated DAG. Immutable after build; safe to share across threads.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CausalGraph {
    nodes: BTreeMap<String, NodeSpec>,
    output: String,
    #[serde(skip)]
    topo: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct GraphDoc {
    nodes: Vec<NodeSpec>,
    output: String,
}

/// Validate node specs and assemble a graph.
///
/// Rejects duplicate names, dangling parents, invalid per-kind fields,
/// cycles, and any node that does not reach the single sink `output`.
pub fn build_graph(specs: Vec<NodeSpec>, output: &str) -> Result<CausalGraph> {
    let mut nodes: BTreeMap<String, NodeSpec> = BTreeMap::new();
    for spec in specs {
        if nodes.contains_key(&spec.name) {
            return Err(Error::DuplicateNode(spec.name));
        }
        nodes.insert(spec.name.clone(), spec);
    }
    if !nodes.contains_key(output) {
        return Err(Error::UnknownNode(output.to_string()));
    }

    for spec in nodes.values() {
        for parent in &spec.parents {
            if !nodes.contains_key(parent) {
                return Err(Error::DanglingParent {
                    node: spec.name.clone(),
                    parent: parent.clone(),
                });
            }
        }
        match spec.kind {
            NodeKind::Input => {
                if !spec.parents.is_empty() || !spec.lags.is_empty() {
                    return Err(Error::InvalidNode {
                        node: spec.name.clone(),
                        detail: "input nodes take no parents and no lags".into(),
                    });
                }
            }
            NodeKind::Learned => {
                let mut seen = BTreeSet::new();
                for &lag in &spec.lags {
                    if lag == 0 {
                        return Err(Error::InvalidNode {
                            node: spec.name.clone(),
                            detail: "lag orders must be strictly positive".into(),
                        });
                    }
                    if !seen.insert(lag) {
                        return Err(Error::InvalidNode {
                            node: spec.name.clone(),
                            detail: format!("duplicate lag order {lag}"),
                        });
                    }
                }
            }
            NodeKind::Analytic => {
                if spec.function.is_none() {
                    return Err(Error::InvalidNode {
                        node: spec.name.clone(),
                        detail: "analytic nodes must reference a registered function".into(),
                    });
                }
                if !spec.lags.is_empty() {
                    return Err(Error::InvalidNode {
                        node: spec.name.clone(),
                        detail: "analytic nodes take no lags".into(),
                    });
                }
            }
        }
    }

    let topo = toposort(&nodes)?;

    // Every node must reach the sink; equivalently the reverse reachability
    // set from `output` covers the graph. A second childless node shows up
    // here as unreachable.
    let mut children: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for spec in nodes.values() {
        for parent in &spec.parents {
            children
                .entry(parent.as_str())
                .or_default()
                .push(&spec.name);
        }
    }
    let mut reaches: BTreeSet<&str> = BTreeSet::new();
    let mut stack = vec![output];
    while let Some(name) = stack.pop() {
        if reaches.insert(name) {
            if let Some(spec) = nodes.get(name) {
                for parent in &spec.parents {
                    stack.push(parent);
                }
            }
        }
    }
    let stranded: Vec<String> = nodes
        .keys()
        .filter(|n| !reaches.contains(n.as_str()))
        .cloned()
        .collect();
    if !stranded.is_empty() {
        return Err(Error::MultipleSinks(stranded));
    }

    Ok(CausalGraph {
        nodes,
        output: output.to_string(),
        topo,
    })
}

/// Kahn's algorithm with lexicographic tie-breaking, so rebuilding from the
/// same specs always yields the same order.
fn toposort(nodes: &BTreeMap<String, NodeSpec>) -> Result<Vec<String>> {
    let mut indegree: BTreeMap<&str, usize> = nodes.keys().map(|n| (n.as_str(), 0)).collect();
    let mut children: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for spec in nodes.values() {
        for parent in &spec.parents {
            *indegree.get_mut(spec.name.as_str()).unwrap() += 1;
            children
                .entry(parent.as_str())
                .or_default()
                .push(&spec.name);
        }
    }
    let mut ready: BTreeSet<&str> = indegree
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(&n, _)| n)
        .collect();
    let mut order = Vec::with_capacity(nodes.len());
    while let Some(&name) = ready.iter().next() {
        ready.remove(name);
        order.push(name.to_string());
        if let Some(kids) = children.get(name) {
            for &kid in kids {
                let d = indegree.get_mut(kid).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.insert(kid);
                }
            }
        }
    }
    if order.len() != nodes.len() {
        let stuck = indegree
            .iter()
            .find(|(_, &d)| d > 0)
            .map(|(&n, _)| n.to_string())
            .unwrap_or_default();
        return Err(Error::CycleDetected(stuck));
    }
    Ok(order)
}

impl CausalGraph {
    pub fn node(&self, name: &str) -> Result<&NodeSpec> {
        self.nodes
            .get(name)
            .ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeSpec> {
        self.nodes.values()
    }

    pub fn output(&self) -> &str {
        &self.output
    }

    /// Evaluation order; every node appears after all of its parents.
    pub fn topological_order(&self) -> &[String] {
        &self.topo
    }

    /// Input node names in lexicographic order. This is the canonical player
    /// ordering used by attribution.
    pub fn input_names(&self) -> Vec<String> {
        self.nodes
            .values()
            .filter(|s| s.kind == NodeKind::Input)
            .map(|s| s.name.clone())
            .collect()
    }

    pub fn learned_names(&self) -> Vec<String> {
        self.nodes
            .values()
            .filter(|s| s.kind == NodeKind::Learned)
            .map(|s| s.name.clone())
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = GraphDoc {
            nodes: self.nodes.values().cloned().collect(),
            output: self.output.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let doc: GraphDoc = serde_json::from_str(json)?;
        build_graph(doc.nodes, &doc.output)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
