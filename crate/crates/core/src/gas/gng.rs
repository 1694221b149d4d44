//! Growing Neural Gas.
//!
//! Every `lambda` steps a node is inserted halfway between the node with the
//! largest accumulated error and its worst neighbour; errors decay by `d`
//! after every step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    initial_pair, shuffled_order, EpochSummary, GasError, GasGraph, GasParams, NodeId,
    StepOutcome, StepReport,
};
use crate::linalg;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GngParams {
    /// Insertion interval in steps.
    pub lambda: u64,
    pub eps_b: f64,
    pub eps_n: f64,
    pub a_max: u32,
    /// Multiplicative error decay applied after every step.
    pub d: f64,
    /// Error reduction of the two nodes an insertion splits.
    pub alpha_split: f64,
    pub max_nodes: usize,
    pub epochs: usize,
}

impl Default for GngParams {
    fn default() -> Self {
        Self {
            lambda: 3,
            eps_b: 0.2,
            eps_n: 0.006,
            a_max: 1,
            d: 0.995,
            alpha_split: 0.5,
            max_nodes: 1000,
            epochs: 10,
        }
    }
}

impl GngParams {
    pub fn validate(&self) -> Result<(), GasError> {
        let fail = |m: &str| Err(GasError::InvalidParams(format!("gng: {m}")));
        if self.lambda < 1 {
            return fail("need lambda >= 1");
        }
        if !(self.d > 0.0 && self.d < 1.0) {
            return fail("need 0 < d < 1");
        }
        if !(self.eps_n > 0.0 && self.eps_n <= self.eps_b && self.eps_b < 1.0) {
            return fail("need 0 < eps_n <= eps_b < 1");
        }
        if !(self.alpha_split > 0.0 && self.alpha_split <= 1.0) {
            return fail("need 0 < alpha_split <= 1");
        }
        if self.max_nodes < 2 {
            return fail("need max_nodes >= 2");
        }
        Ok(())
    }
}

/// Node with the largest accumulated error among `ids` (smallest id on ties).
fn max_error(graph: &GasGraph, ids: impl Iterator<Item = NodeId>) -> Option<NodeId> {
    let mut best: Option<(f64, NodeId)> = None;
    for id in ids {
        let e = graph.node(id).expect("node exists").accumulated_error;
        if best.is_none_or(|(be, _)| e > be) {
            best = Some((e, id));
        }
    }
    best.map(|(_, id)| id)
}

/// One GNG update; `step` is the 1-based global step counter.
pub fn gng_step(graph: &mut GasGraph, x: &[f64], params: &GngParams, step: u64) -> Result<StepReport, GasError> {
    let bt = graph.find_best_two(x)?;
    let (b, s) = (bt.best, bt.second);

    graph.age_edges_of(b);
    {
        let node = graph.node_mut(b);
        node.accumulated_error += bt.best_distance * bt.best_distance;
        node.win_count += 1;
        linalg::move_towards(&mut node.weight, x, params.eps_b);
    }
    let neighbours: Vec<_> = graph.neighbors(b).collect();
    for n in neighbours {
        linalg::move_towards(&mut graph.node_mut(n).weight, x, params.eps_n);
    }
    graph.connect(b, s);
    let (removed_edges, removed_nodes) = graph.prune(params.a_max);

    let mut outcome = StepOutcome::Adapted;
    if step % params.lambda == 0 && graph.len() < params.max_nodes {
        let ids: Vec<_> = graph.node_ids().collect();
        if let Some(q) = max_error(graph, ids.into_iter()) {
            let neigh: Vec<_> = graph.neighbors(q).collect();
            if let Some(f) = max_error(graph, neigh.into_iter()) {
                let weight = linalg::midpoint(&graph.node(q).unwrap().weight, &graph.node(f).unwrap().weight);
                let r = graph.add_node(weight, 1.0);
                graph.disconnect(q, f);
                graph.connect(q, r);
                graph.connect(r, f);
                graph.node_mut(q).accumulated_error *= params.alpha_split;
                graph.node_mut(f).accumulated_error *= params.alpha_split;
                let eq = graph.node(q).unwrap().accumulated_error;
                graph.node_mut(r).accumulated_error = eq;
                outcome = StepOutcome::Inserted(r);
            }
        }
    }

    let ids: Vec<_> = graph.node_ids().collect();
    for id in ids {
        graph.node_mut(id).accumulated_error *= params.d;
    }

    assert!(graph.len() <= params.max_nodes, "GNG node budget exceeded");
    Ok(StepReport {
        best: b,
        second: s,
        best_distance: bt.best_distance,
        activation: None,
        outcome,
        removed_edges,
        removed_nodes,
    })
}

pub fn gng_train<V: AsRef<[f64]>>(data: &[V], params: &GngParams, seed: u64) -> Result<GasGraph, GasError> {
    gng_train_with(data, params, seed, |_, _| {})
}

/// [`gng_train`] with an observer called after every epoch.
pub fn gng_train_with<V, F>(data: &[V], params: &GngParams, seed: u64, mut on_epoch: F) -> Result<GasGraph, GasError>
where
    V: AsRef<[f64]>,
    F: FnMut(&EpochSummary, &GasGraph),
{
    params.validate()?;
    if data.len() < 2 {
        return Err(GasError::EmptyData);
    }
    let dim = data[0].as_ref().len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graph = GasGraph::new(dim);
    let (i, j) = initial_pair(data, &mut rng);
    for idx in [i, j] {
        graph.check_dim(data[idx].as_ref())?;
        graph.add_node(data[idx].as_ref().to_vec(), 1.0);
    }
    graph.params = Some(GasParams::Gng(params.clone()));

    let mut step = 0u64;
    for epoch in 0..params.epochs {
        let mut summary = EpochSummary {
            epoch,
            ..Default::default()
        };
        for k in shuffled_order(data.len(), &mut rng) {
            step += 1;
            if let StepOutcome::Inserted(_) = gng_step(&mut graph, data[k].as_ref(), params, step)?.outcome {
                summary.inserted += 1;
            }
        }
        summary.nodes = graph.len();
        summary.edges = graph.edge_count();
        on_epoch(&summary, &graph);
    }
    Ok(graph)
}
