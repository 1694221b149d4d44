//! Online topology-learning vector quantizers.
//!
//! [`GasGraph`] holds prototype nodes and aged edges; [`gwr`] and [`gng`]
//! grow it from data. Node ids are never reused, and every nearest-node
//! search breaks distance ties towards the smallest id.

pub mod gng;
pub mod gwr;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;

pub use gng::{gng_step, gng_train, gng_train_with, GngParams};
pub use gwr::{gwr_step, gwr_train, gwr_train_with, ActivationStats, GwrParams, OutlierGate};

pub type NodeId = u64;

#[derive(Debug, Error)]
pub enum GasError {
    #[error("dimension mismatch: graph has {expected}, input has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("operation needs at least 2 nodes, graph has {0}")]
    TooFewNodes(usize),
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("training data is empty or has fewer than 2 samples")]
    EmptyData,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("graph document: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GasNode {
    pub id: NodeId,
    pub weight: Vec<f64>,
    /// Habituation (firing counter); decays towards `h_min` as the node wins.
    #[serde(rename = "h")]
    pub habituation: f64,
    #[serde(default)]
    pub accumulated_error: f64,
    #[serde(default)]
    pub win_count: u64,
}

/// Training parameters recorded with a graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "lowercase")]
pub enum GasParams {
    Gwr(GwrParams),
    Gng(GngParams),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BestTwo {
    pub best: NodeId,
    pub second: NodeId,
    pub best_distance: f64,
    pub second_distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GasGraph {
    dimension: usize,
    nodes: BTreeMap<NodeId, GasNode>,
    /// Keyed by `(min id, max id)`; value is the edge age.
    edges: BTreeMap<(NodeId, NodeId), u32>,
    adjacency: BTreeMap<NodeId, BTreeSet<NodeId>>,
    next_id: NodeId,
    pub params: Option<GasParams>,
}

fn edge_key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl GasGraph {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            nodes: BTreeMap::new(),
            edges: BTreeMap::new(),
            adjacency: BTreeMap::new(),
            next_id: 0,
            params: None,
        }
    }

    /// Graph with one node per weight (habituation 1), no edges.
    pub fn from_weights<V: AsRef<[f64]>>(weights: &[V]) -> Result<Self, GasError> {
        let dimension = weights.first().ok_or(GasError::EmptyGraph)?.as_ref().len();
        let mut g = Self::new(dimension);
        for w in weights {
            g.check_dim(w.as_ref())?;
            g.add_node(w.as_ref().to_vec(), 1.0);
        }
        Ok(g)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, id: NodeId) -> Option<&GasNode> {
        self.nodes.get(&id)
    }

    pub(crate) fn node_mut(&mut self, id: NodeId) -> &mut GasNode {
        self.nodes.get_mut(&id).expect("node exists")
    }

    /// Nodes in ascending id order.
    pub fn nodes(&self) -> impl Iterator<Item = &GasNode> {
        self.nodes.values()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    /// `(a, b, age)` with `a < b`, in key order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, u32)> + '_ {
        self.edges.iter().map(|(&(a, b), &age)| (a, b, age))
    }

    pub fn edge_age(&self, a: NodeId, b: NodeId) -> Option<u32> {
        self.edges.get(&edge_key(a, b)).copied()
    }

    pub fn neighbors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.get(&id).into_iter().flatten().copied()
    }

    pub fn degree(&self, id: NodeId) -> usize {
        self.adjacency.get(&id).map_or(0, BTreeSet::len)
    }

    pub(crate) fn check_dim(&self, x: &[f64]) -> Result<(), GasError> {
        if x.len() != self.dimension {
            return Err(GasError::DimensionMismatch {
                expected: self.dimension,
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn add_node(&mut self, weight: Vec<f64>, habituation: f64) -> NodeId {
        assert_eq!(weight.len(), self.dimension, "node weight dimension");
        let id = self.next_id;
        self.next_id += 1;
        self.nodes.insert(
            id,
            GasNode {
                id,
                weight,
                habituation,
                accumulated_error: 0.0,
                win_count: 0,
            },
        );
        self.adjacency.insert(id, BTreeSet::new());
        id
    }

    pub fn remove_node(&mut self, id: NodeId) {
        if let Some(neigh) = self.adjacency.remove(&id) {
            for n in neigh {
                self.edges.remove(&edge_key(id, n));
                if let Some(set) = self.adjacency.get_mut(&n) {
                    set.remove(&id);
                }
            }
        }
        self.nodes.remove(&id);
    }

    /// Creates the edge, or resets its age to 0 if it exists.
    pub fn connect(&mut self, a: NodeId, b: NodeId) {
        assert!(a != b, "self-loops are not allowed");
        assert!(self.nodes.contains_key(&a) && self.nodes.contains_key(&b));
        self.edges.insert(edge_key(a, b), 0);
        self.adjacency.get_mut(&a).unwrap().insert(b);
        self.adjacency.get_mut(&b).unwrap().insert(a);
    }

    pub fn disconnect(&mut self, a: NodeId, b: NodeId) {
        if self.edges.remove(&edge_key(a, b)).is_some() {
            self.adjacency.get_mut(&a).unwrap().remove(&b);
            self.adjacency.get_mut(&b).unwrap().remove(&a);
        }
    }

    /// Increments the age of every edge incident to `id`.
    pub fn age_edges_of(&mut self, id: NodeId) {
        if let Some(neigh) = self.adjacency.get(&id) {
            for &n in neigh {
                if let Some(age) = self.edges.get_mut(&edge_key(id, n)) {
                    *age += 1;
                }
            }
        }
    }

    /// Removes edges older than `max_age`, then isolated nodes (ascending id)
    /// while more than two nodes remain. Returns `(edges, nodes)` removed.
    pub fn prune(&mut self, max_age: u32) -> (usize, usize) {
        let stale: Vec<(NodeId, NodeId)> = self
            .edges
            .iter()
            .filter(|(_, &age)| age > max_age)
            .map(|(&k, _)| k)
            .collect();
        for &(a, b) in &stale {
            self.disconnect(a, b);
        }
        let isolated: Vec<NodeId> = self
            .adjacency
            .iter()
            .filter(|(_, n)| n.is_empty())
            .map(|(&id, _)| id)
            .collect();
        let mut removed = 0;
        for id in isolated {
            if self.nodes.len() <= 2 {
                break;
            }
            self.remove_node(id);
            removed += 1;
        }
        (stale.len(), removed)
    }

    /// Nearest and second-nearest nodes by Euclidean distance.
    pub fn find_best_two(&self, x: &[f64]) -> Result<BestTwo, GasError> {
        self.check_dim(x)?;
        if self.nodes.len() < 2 {
            return Err(GasError::TooFewNodes(self.nodes.len()));
        }
        let mut best = (f64::INFINITY, NodeId::MAX);
        let mut second = (f64::INFINITY, NodeId::MAX);
        // ascending ids + strict comparisons keep the smallest id on ties
        for node in self.nodes.values() {
            let d = linalg::squared_distance(&node.weight, x);
            if d < best.0 {
                second = best;
                best = (d, node.id);
            } else if d < second.0 {
                second = (d, node.id);
            }
        }
        Ok(BestTwo {
            best: best.1,
            second: second.1,
            best_distance: best.0.sqrt(),
            second_distance: second.0.sqrt(),
        })
    }

    /// Nearest node and its distance.
    pub fn quantize(&self, x: &[f64]) -> Result<(NodeId, f64), GasError> {
        self.check_dim(x)?;
        let mut best = (f64::INFINITY, NodeId::MAX);
        for node in self.nodes.values() {
            let d = linalg::squared_distance(&node.weight, x);
            if d < best.0 {
                best = (d, node.id);
            }
        }
        if best.1 == NodeId::MAX {
            return Err(GasError::EmptyGraph);
        }
        Ok((best.1, best.0.sqrt()))
    }

    /// Mean distance from each sample to its nearest node.
    pub fn quantization_error<V: AsRef<[f64]> + Sync>(&self, data: &[V]) -> Result<f64, GasError> {
        use rayon::prelude::*;
        if data.is_empty() {
            return Ok(0.0);
        }
        let dists = data
            .par_iter()
            .map(|x| self.quantize(x.as_ref()).map(|(_, d)| d))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(dists.iter().sum::<f64>() / data.len() as f64)
    }

    /// Every node carries exactly `dimension` finite weights.
    pub fn check_invariants(&self) -> Result<(), String> {
        for n in self.nodes.values() {
            if n.weight.len() != self.dimension || !n.weight.iter().all(|w| w.is_finite()) {
                return Err(format!("node {} has an invalid weight", n.id));
            }
            if n.accumulated_error < 0.0 {
                return Err(format!("node {} has negative error", n.id));
            }
        }
        for &(a, b) in self.edges.keys() {
            if a == b || !self.nodes.contains_key(&a) || !self.nodes.contains_key(&b) {
                return Err(format!("edge ({a},{b}) is dangling"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&GraphDoc::from(self)).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GasError> {
        let doc: GraphDoc = serde_json::from_str(text)?;
        doc.try_into()
    }

    pub fn save(&self, path: &Path) -> Result<(), GasError> {
        std::fs::write(path, self.to_json()).map_err(|source| GasError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, GasError> {
        let text = std::fs::read_to_string(path).map_err(|source| GasError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct EdgeDoc {
    a: NodeId,
    b: NodeId,
    age: u32,
}

#[derive(Serialize, Deserialize)]
struct GraphDoc {
    dimension: usize,
    params: Option<GasParams>,
    nodes: Vec<GasNode>,
    edges: Vec<EdgeDoc>,
}

impl From<&GasGraph> for GraphDoc {
    fn from(g: &GasGraph) -> Self {
        GraphDoc {
            dimension: g.dimension,
            params: g.params.clone(),
            nodes: g.nodes.values().cloned().collect(),
            edges: g.edges().map(|(a, b, age)| EdgeDoc { a, b, age }).collect(),
        }
    }
}

impl TryFrom<GraphDoc> for GasGraph {
    type Error = GasError;

    fn try_from(doc: GraphDoc) -> Result<Self, GasError> {
        let mut g = GasGraph::new(doc.dimension);
        g.params = doc.params;
        for node in doc.nodes {
            g.check_dim(&node.weight)?;
            g.next_id = g.next_id.max(node.id + 1);
            g.adjacency.insert(node.id, BTreeSet::new());
            g.nodes.insert(node.id, node);
        }
        for e in doc.edges {
            if e.a == e.b || !g.nodes.contains_key(&e.a) || !g.nodes.contains_key(&e.b) {
                return Err(GasError::InvalidParams(format!(
                    "edge ({}, {}) references a missing node",
                    e.a, e.b
                )));
            }
            g.connect(e.a, e.b);
            g.edges.insert(edge_key(e.a, e.b), e.age);
        }
        Ok(g)
    }
}

/// Two initial nodes at distinct samples (by value when possible).
pub(crate) fn initial_pair<V: AsRef<[f64]>>(data: &[V], rng: &mut ChaCha8Rng) -> (usize, usize) {
    let first = rng.random_range(0..data.len());
    let mut candidates: Vec<usize> = (0..data.len())
        .filter(|&i| data[i].as_ref() != data[first].as_ref())
        .collect();
    if candidates.is_empty() {
        candidates = (0..data.len()).filter(|&i| i != first).collect();
    }
    let second = candidates[rng.random_range(0..candidates.len())];
    (first, second)
}

pub(crate) fn shuffled_order(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

/// What a single training step did to the graph.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepOutcome {
    /// Rejected by the outlier gate; weights untouched.
    Skipped,
    Inserted(NodeId),
    Adapted,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    pub best: NodeId,
    pub second: NodeId,
    pub best_distance: f64,
    /// GWR activation `exp(-distance)`; `None` for GNG.
    pub activation: Option<f64>,
    pub outcome: StepOutcome,
    pub removed_edges: usize,
    pub removed_nodes: usize,
}

/// Per-epoch counters reported to training observers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub nodes: usize,
    pub edges: usize,
    pub inserted: usize,
    pub skipped: usize,
}
