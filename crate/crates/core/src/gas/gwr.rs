//! Growing-When-Required network.
//!
//! A node is inserted as soon as the best-matching node is both poorly
//! activated (`exp(-distance) < a_t`) and already well trained (habituation
//! below `h_t`). Otherwise the winner and its topological neighbours move
//! towards the sample, scaled by their habituation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    initial_pair, shuffled_order, EpochSummary, GasError, GasGraph, GasParams, StepOutcome,
    StepReport,
};
use crate::linalg;

/// What to do with samples whose activation falls below
/// `mean - gamma * std` of the running activation statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierGate {
    /// Gate disabled.
    Off,
    /// Ignore the sample entirely.
    Skip,
    /// Adapt weights but never insert a node for the sample.
    UpdateOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GwrParams {
    /// Activation threshold for insertion.
    pub a_t: f64,
    pub max_nodes: usize,
    pub epochs: usize,
    pub eps_b: f64,
    pub eps_n: f64,
    pub a_max: u32,
    pub h_0: f64,
    pub alpha_b: f64,
    pub alpha_n: f64,
    pub tau_b: f64,
    pub tau_n: f64,
    /// Firing threshold: only nodes with habituation below it trigger growth.
    pub h_t: f64,
    pub h_min: f64,
    pub gamma: f64,
    pub gate: OutlierGate,
    /// Samples observed before the outlier gate activates.
    pub warmup: usize,
}

impl Default for GwrParams {
    fn default() -> Self {
        Self {
            a_t: 0.995,
            max_nodes: 1000,
            epochs: 10,
            eps_b: 0.2,
            eps_n: 0.006,
            a_max: 50,
            h_0: 1.0,
            alpha_b: 0.95,
            alpha_n: 0.95,
            tau_b: 3.33,
            tau_n: 14.3,
            h_t: 0.1,
            h_min: 0.001,
            gamma: 4.0,
            gate: OutlierGate::Skip,
            warmup: 100,
        }
    }
}

impl GwrParams {
    pub fn validate(&self) -> Result<(), GasError> {
        let fail = |m: &str| Err(GasError::InvalidParams(format!("gwr: {m}")));
        if !(self.eps_n > 0.0 && self.eps_n <= self.eps_b && self.eps_b < 1.0) {
            return fail("need 0 < eps_n <= eps_b < 1");
        }
        if !(self.a_t > 0.0 && self.a_t <= 1.0) {
            return fail("need 0 < a_t <= 1");
        }
        if !(self.tau_b > 0.0 && self.tau_n > 0.0) {
            return fail("need tau_b, tau_n > 0");
        }
        if !(self.gamma >= 0.0) {
            return fail("need gamma >= 0");
        }
        if !(self.h_min > 0.0 && self.h_min < self.h_0) {
            return fail("need 0 < h_min < h_0");
        }
        if self.max_nodes < 2 {
            return fail("need max_nodes >= 2");
        }
        Ok(())
    }
}

/// Running mean and standard deviation of activations (Welford).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ActivationStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl ActivationStats {
    pub fn push(&mut self, a: f64) {
        self.count += 1;
        let delta = a - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (a - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population standard deviation.
    pub fn std(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).sqrt()
        }
    }
}

/// Discrete habituation update `h += (alpha (h_0 - h) - 1) / tau`, clamped
/// to `[h_min, h_0]`.
pub fn habituate(h: f64, alpha: f64, tau: f64, h_0: f64, h_min: f64) -> f64 {
    (h + (alpha * (h_0 - h) - 1.0) / tau).clamp(h_min, h_0)
}

/// One GWR update for sample `x`.
pub fn gwr_step(
    graph: &mut GasGraph,
    x: &[f64],
    params: &GwrParams,
    stats: &mut ActivationStats,
) -> Result<StepReport, GasError> {
    let bt = graph.find_best_two(x)?;
    let (b, s) = (bt.best, bt.second);
    graph.connect(b, s);

    let activation = (-bt.best_distance).exp();
    let mut allow_insert = true;
    if params.gate != OutlierGate::Off
        && stats.count() >= params.warmup as u64
        && activation < stats.mean() - params.gamma * stats.std()
    {
        match params.gate {
            OutlierGate::Skip => {
                return Ok(StepReport {
                    best: b,
                    second: s,
                    best_distance: bt.best_distance,
                    activation: Some(activation),
                    outcome: StepOutcome::Skipped,
                    removed_edges: 0,
                    removed_nodes: 0,
                });
            }
            OutlierGate::UpdateOnly => allow_insert = false,
            OutlierGate::Off => unreachable!(),
        }
    }

    let h_b = graph.node(b).expect("best exists").habituation;
    graph.node_mut(b).win_count += 1;
    let outcome = if allow_insert
        && activation < params.a_t
        && h_b < params.h_t
        && graph.len() < params.max_nodes
    {
        let weight = linalg::midpoint(&graph.node(b).unwrap().weight, x);
        let r = graph.add_node(weight, params.h_0);
        graph.connect(r, b);
        graph.connect(r, s);
        graph.disconnect(b, s);
        StepOutcome::Inserted(r)
    } else {
        linalg::move_towards(&mut graph.node_mut(b).weight, x, params.eps_b * h_b);
        let neighbours: Vec<_> = graph.neighbors(b).collect();
        for n in neighbours {
            let node = graph.node_mut(n);
            let rate = params.eps_n * node.habituation;
            linalg::move_towards(&mut node.weight, x, rate);
        }
        StepOutcome::Adapted
    };

    graph.age_edges_of(b);

    {
        let node = graph.node_mut(b);
        node.habituation = habituate(node.habituation, params.alpha_b, params.tau_b, params.h_0, params.h_min);
    }
    let neighbours: Vec<_> = graph.neighbors(b).collect();
    for n in neighbours {
        let node = graph.node_mut(n);
        node.habituation = habituate(node.habituation, params.alpha_n, params.tau_n, params.h_0, params.h_min);
    }

    let (removed_edges, removed_nodes) = graph.prune(params.a_max);
    stats.push(activation);

    assert!(graph.len() <= params.max_nodes, "GWR node budget exceeded");
    Ok(StepReport {
        best: b,
        second: s,
        best_distance: bt.best_distance,
        activation: Some(activation),
        outcome,
        removed_edges,
        removed_nodes,
    })
}

/// Trains a GWR network on `data`.
pub fn gwr_train<V: AsRef<[f64]>>(data: &[V], params: &GwrParams, seed: u64) -> Result<GasGraph, GasError> {
    gwr_train_with(data, params, seed, |_, _| {})
}

/// [`gwr_train`] with an observer called after every epoch.
pub fn gwr_train_with<V, F>(data: &[V], params: &GwrParams, seed: u64, mut on_epoch: F) -> Result<GasGraph, GasError>
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
        graph.add_node(data[idx].as_ref().to_vec(), params.h_0);
    }
    graph.params = Some(GasParams::Gwr(params.clone()));

    let mut stats = ActivationStats::default();
    for epoch in 0..params.epochs {
        let mut summary = EpochSummary {
            epoch,
            ..Default::default()
        };
        for k in shuffled_order(data.len(), &mut rng) {
            match gwr_step(&mut graph, data[k].as_ref(), params, &mut stats)?.outcome {
                StepOutcome::Inserted(_) => summary.inserted += 1,
                StepOutcome::Skipped => summary.skipped += 1,
                StepOutcome::Adapted => {}
            }
        }
        summary.nodes = graph.len();
        summary.edges = graph.edge_count();
        on_epoch(&summary, &graph);
    }
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_nodes(a: Vec<f64>, b: Vec<f64>, h: f64) -> GasGraph {
        let mut g = GasGraph::new(a.len());
        g.add_node(a, h);
        g.add_node(b, h);
        g
    }

    #[test]
    fn habituation_decays_from_h0() {
        let p = GwrParams::default();
        let h1 = habituate(1.0, p.alpha_b, p.tau_b, p.h_0, p.h_min);
        assert!((h1 - (1.0 - 1.0 / 3.33)).abs() < 1e-15);
        let h2 = habituate(h1, p.alpha_b, p.tau_b, p.h_0, p.h_min);
        assert!((h2 - (h1 + (0.95 * (1.0 - h1) - 1.0) / 3.33)).abs() < 1e-15);
        let mut h = 1.0;
        for _ in 0..100 {
            h = habituate(h, p.alpha_b, p.tau_b, p.h_0, p.h_min);
        }
        assert_eq!(h, p.h_min);
    }

    #[test]
    fn far_sample_on_fresh_graph_moves_the_winner() {
        let params = GwrParams::default();
        let mut g = two_nodes(vec![0.0, 0.0], vec![10.0, 0.0], params.h_0);
        let x = [0.0, 3.0];
        let mut stats = ActivationStats::default();
        let r = gwr_step(&mut g, &x, &params, &mut stats).unwrap();

        let expected_a = (-3.0f64).exp();
        assert!((r.activation.unwrap() - expected_a).abs() < 1e-15);
        assert_eq!(r.outcome, StepOutcome::Adapted);
        assert_eq!(g.len(), 2);
        // w_b += eps_b * h_b * (x - w_b) with h_b = h_0 = 1
        let w = &g.node(0).unwrap().weight;
        assert!((w[0] - 0.0).abs() < 1e-15 && (w[1] - 0.6).abs() < 1e-15);
        // the neighbour s moves by eps_n * h_s
        let ws = &g.node(1).unwrap().weight;
        assert!((ws[0] - (10.0 - 0.006 * 10.0)).abs() < 1e-12);
        assert!((ws[1] - 0.006 * 3.0).abs() < 1e-12);
        assert_eq!(g.edge_age(0, 1), Some(1));
        assert_eq!(stats.count(), 1);
    }

    #[test]
    fn exact_match_does_not_move_winner() {
        let params = GwrParams::default();
        let mut g = two_nodes(vec![1.0, 2.0], vec![5.0, 5.0], params.h_0);
        let mut stats = ActivationStats::default();
        let r = gwr_step(&mut g, &[1.0, 2.0], &params, &mut stats).unwrap();
        assert_eq!(r.activation, Some(1.0));
        assert_eq!(r.outcome, StepOutcome::Adapted);
        assert_eq!(g.node(0).unwrap().weight, vec![1.0, 2.0]);
    }

    #[test]
    fn insertion_after_habituation() {
        let params = GwrParams::default();
        let mut g = two_nodes(vec![0.0], vec![100.0], params.h_0);
        let mut stats = ActivationStats::default();
        // Analytic habituation: number of wins until h_b < h_t.
        let mut h = params.h_0;
        let mut wins_needed = 0;
        while h >= params.h_t {
            h = habituate(h, params.alpha_b, params.tau_b, params.h_0, params.h_min);
            wins_needed += 1;
        }
        for _ in 0..wins_needed {
            let r = gwr_step(&mut g, &[0.0], &params, &mut stats).unwrap();
            assert_eq!(r.outcome, StepOutcome::Adapted);
        }
        assert!((g.node(0).unwrap().habituation - h).abs() < 1e-15);

        let x = [4.0];
        let r = gwr_step(&mut g, &x, &params, &mut stats).unwrap();
        let StepOutcome::Inserted(new) = r.outcome else {
            panic!("expected insertion, got {:?}", r.outcome);
        };
        assert_eq!(g.node(new).unwrap().weight, vec![2.0]);
        assert!(g.edge_age(new, 0).is_some() && g.edge_age(new, 1).is_some());
        assert!(g.edge_age(0, 1).is_none());
        // the winner did not move
        assert_eq!(g.node(0).unwrap().weight, vec![0.0]);
    }

    #[test]
    fn outlier_gate_skips_low_activation_samples() {
        let params = GwrParams {
            warmup: 5,
            gamma: 1.0,
            ..GwrParams::default()
        };
        let mut g = two_nodes(vec![0.0], vec![1.0], params.h_0);
        let mut stats = ActivationStats::default();
        for k in 0..5 {
            let x = [0.01 * (k % 2) as f64];
            gwr_step(&mut g, &x, &params, &mut stats).unwrap();
        }
        let before = g.clone();
        let r = gwr_step(&mut g, &[50.0], &params, &mut stats).unwrap();
        assert_eq!(r.outcome, StepOutcome::Skipped);
        assert_eq!(stats.count(), 5);
        for (a, b) in g.nodes().zip(before.nodes()) {
            assert_eq!(a.weight, b.weight);
            assert_eq!(a.habituation, b.habituation);
        }

        let update_only = GwrParams {
            gate: OutlierGate::UpdateOnly,
            ..params.clone()
        };
        let mut g2 = before.clone();
        let mut st2 = stats;
        let r = gwr_step(&mut g2, &[50.0], &update_only, &mut st2).unwrap();
        assert_eq!(r.outcome, StepOutcome::Adapted);
        assert_eq!(g2.len(), before.len());
    }

    #[test]
    fn dimension_mismatch() {
        let params = GwrParams::default();
        let mut g = two_nodes(vec![0.0], vec![1.0], 1.0);
        assert!(matches!(
            gwr_step(&mut g, &[0.0, 1.0], &params, &mut ActivationStats::default()),
            Err(GasError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn training_two_points() {
        let data = vec![vec![0.0, 0.0], vec![3.0, 4.0]];
        let params = GwrParams {
            epochs: 1,
            ..GwrParams::default()
        };
        let g = gwr_train(&data, &params, 1).unwrap();
        assert!(g.len() >= 2);
        // Nodes start on the samples (error 0); only neighbour drag of at
        // most eps_n * separation per step can move them off.
        let bound = params.eps_n * 5.0;
        assert!(g.quantization_error(&data).unwrap() <= bound);
        assert!(matches!(
            gwr_train(&data[..1], &params, 1),
            Err(GasError::EmptyData)
        ));
    }

    #[test]
    fn stats_match_two_pass_moments() {
        let xs = [0.3, 0.9, 0.1, 0.5, 0.5, 0.7];
        let mut s = ActivationStats::default();
        xs.iter().for_each(|x| s.push(*x));
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!((s.mean() - mean).abs() < 1e-15);
        assert!((s.std() - var.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn invalid_params_are_rejected() {
        let bad = GwrParams {
            eps_n: 0.5,
            eps_b: 0.2,
            ..GwrParams::default()
        };
        assert!(bad.validate().is_err());
        assert!(GwrParams { a_t: 0.0, ..GwrParams::default() }.validate().is_err());
        assert!(GwrParams { tau_n: 0.0, ..GwrParams::default() }.validate().is_err());
        assert!(GwrParams::default().validate().is_ok());
    }
}
