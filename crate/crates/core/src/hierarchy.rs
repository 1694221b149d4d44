//! Two-branch, three-layer gas hierarchy.
//!
//! ```text
//! poses ──► pose L1 ──remap, window──► pose L2 ─┐
//!                                               ├─ concat ─window─► L3
//! velocities ► vel L1 ──remap, window─► vel L2 ─┘
//! ```
//!
//! Each layer is a GWR or GNG gas. Between layers every vector is replaced by
//! its best-matching prototype and windows of consecutive prototypes are
//! concatenated. Classification uses the labelled prototypes of either the
//! first pose layer or the combined third layer.
//!
//! Time alignment (0-based frame position `n` within a recording): a
//! velocity belongs to the later of its two frames; a window belongs to the
//! frame of its last element. Layer-3 inputs concatenate the pose-L2 and
//! velocity-L2 prototypes (pose first) that end on the same frame.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ActivityLabel, POSE_DIM};
use crate::gas::{gng_train, gwr_train, GasError, GasGraph, GngParams, GwrParams, NodeId};
use crate::linalg;
use crate::precondition::{compute_velocities, dilated_windows, PoseSequence, PoseVector};

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error(transparent)]
    Gas(#[from] GasError),
    #[error("recording has {frames} frames, layer 3 needs at least {needed}")]
    TooShortRecording { frames: usize, needed: usize },
    #[error("no labelled training vectors")]
    EmptyTraining,
    #[error("invalid layer specification: {0}")]
    InvalidSpec(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("model manifest: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "lowercase")]
pub enum GasEngine {
    Gwr(GwrParams),
    Gng(GngParams),
}

impl GasEngine {
    pub fn name(&self) -> &'static str {
        match self {
            GasEngine::Gwr(_) => "gwr",
            GasEngine::Gng(_) => "gng",
        }
    }

    pub fn max_nodes(&self) -> usize {
        match self {
            GasEngine::Gwr(p) => p.max_nodes,
            GasEngine::Gng(p) => p.max_nodes,
        }
    }

    pub fn train<V: AsRef<[f64]>>(&self, data: &[V], seed: u64) -> Result<GasGraph, GasError> {
        match self {
            GasEngine::Gwr(p) => gwr_train(data, p, seed),
            GasEngine::Gng(p) => gng_train(data, p, seed),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub engine: GasEngine,
    /// Number of lower-layer prototypes concatenated per input.
    pub window: usize,
    /// Spacing between window elements, in time steps.
    #[serde(default = "one")]
    pub dilation: usize,
}

fn one() -> usize {
    1
}

impl LayerSpec {
    fn span(&self) -> usize {
        (self.window - 1) * self.dilation + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifyAt {
    L1Pose,
    L3Combined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchyConfig {
    pub pose_l1: LayerSpec,
    pub pose_l2: LayerSpec,
    pub vel_l1: LayerSpec,
    pub vel_l2: LayerSpec,
    pub combined_l3: LayerSpec,
    pub classify_at: ClassifyAt,
    /// Train layers 2 and 3 even when classifying at layer 1.
    pub train_upper_layers: bool,
}

impl HierarchyConfig {
    /// Same engine on every layer: windows of 3 on layers 2 and 3, with the
    /// layer-3 window stepping over whole layer-2 windows.
    pub fn uniform(engine: GasEngine, classify_at: ClassifyAt) -> Self {
        let layer = |window, dilation| LayerSpec {
            engine: engine.clone(),
            window,
            dilation,
        };
        Self {
            pose_l1: layer(1, 1),
            pose_l2: layer(3, 1),
            vel_l1: layer(1, 1),
            vel_l2: layer(3, 1),
            combined_l3: layer(3, 3),
            classify_at,
            train_upper_layers: false,
        }
    }

    pub fn validate(&self) -> Result<(), HierarchyError> {
        let bad = |m: String| Err(HierarchyError::InvalidSpec(m));
        for (name, l) in self.layers() {
            if l.window != 1 && l.window != 3 {
                return bad(format!("{name}: window must be 1 or 3, got {}", l.window));
            }
            if l.dilation == 0 {
                return bad(format!("{name}: dilation must be >= 1"));
            }
        }
        if self.pose_l1.window != 1 || self.vel_l1.window != 1 {
            return bad("first layers take single vectors (window 1)".into());
        }
        if self.pose_l2.span() != self.vel_l2.span() {
            return bad("pose and velocity layer-2 windows must span the same frames".into());
        }
        Ok(())
    }

    fn layers(&self) -> [(&'static str, &LayerSpec); 5] {
        [
            ("pose_l1", &self.pose_l1),
            ("pose_l2", &self.pose_l2),
            ("vel_l1", &self.vel_l1),
            ("vel_l2", &self.vel_l2),
            ("combined_l3", &self.combined_l3),
        ]
    }

    /// Consecutive time steps feeding one layer-3 output.
    pub fn receptive_field_steps(&self) -> usize {
        self.pose_l2.span() + (self.combined_l3.window - 1) * self.combined_l3.dilation
    }

    /// Shortest recording that yields a layer-3 output: the receptive field
    /// plus the frame preceding the first velocity.
    pub fn min_frames_l3(&self) -> usize {
        self.receptive_field_steps() + 1
    }

    pub fn layer3_input_dim(&self) -> usize {
        2 * self.pose_l2.window * POSE_DIM * self.combined_l3.window
    }
}

/// Trained hierarchy plus labelled prototypes of the classifying layer.
#[derive(Clone, Debug, PartialEq)]
pub struct HierarchyModel {
    pub config: HierarchyConfig,
    pub pose_l1: GasGraph,
    pub pose_l2: Option<GasGraph>,
    pub vel_l1: Option<GasGraph>,
    pub vel_l2: Option<GasGraph>,
    pub combined_l3: Option<GasGraph>,
    pub labels: BTreeMap<NodeId, ActivityLabel>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepLabel {
    /// Frame the prediction refers to (last frame of the receptive field).
    pub frame_index: u32,
    pub label: ActivityLabel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    pub steps: Vec<StepLabel>,
    /// Most frequent step label; ties go to the earliest canonical label.
    pub majority: Option<ActivityLabel>,
}

/// Replaces each vector by the weight of its nearest node.
pub fn remap_sequence<V: AsRef<[f64]>>(graph: &GasGraph, vectors: &[V]) -> Result<Vec<Vec<f64>>, GasError> {
    vectors
        .iter()
        .map(|v| {
            let (id, _) = graph.quantize(v.as_ref())?;
            Ok(graph.node(id).expect("quantize returns live nodes").weight.clone())
        })
        .collect()
}

/// Labels every node with the label of its nearest training vector
/// (earliest index on ties).
pub fn label_prototypes<V: AsRef<[f64]> + Sync>(
    graph: &GasGraph,
    vectors: &[V],
    labels: &[ActivityLabel],
) -> Result<BTreeMap<NodeId, ActivityLabel>, HierarchyError> {
    assert_eq!(vectors.len(), labels.len(), "one label per training vector");
    if vectors.is_empty() {
        return Err(HierarchyError::EmptyTraining);
    }
    for v in vectors {
        if v.as_ref().len() != graph.dimension() {
            return Err(GasError::DimensionMismatch {
                expected: graph.dimension(),
                found: v.as_ref().len(),
            }
            .into());
        }
    }
    let nodes: Vec<_> = graph.nodes().collect();
    Ok(nodes
        .par_iter()
        .map(|node| {
            let mut best = (f64::INFINITY, 0usize);
            for (i, v) in vectors.iter().enumerate() {
                let d = linalg::squared_distance(&node.weight, v.as_ref());
                if d < best.0 {
                    best = (d, i);
                }
            }
            (node.id, labels[best.1])
        })
        .collect())
}

fn velocity_values(poses: &[PoseVector]) -> Vec<Vec<f64>> {
    compute_velocities(poses).into_iter().map(|v| v.values).collect()
}

fn windowed(graph: &GasGraph, vectors: &[Vec<f64>], spec: &LayerSpec) -> Result<Vec<Vec<f64>>, GasError> {
    let remapped = remap_sequence(graph, vectors)?;
    Ok(dilated_windows(&remapped, spec.window, spec.dilation)
        .into_iter()
        .map(|w| w.values)
        .collect())
}

/// Layer-3 inputs of one recording; element `j` ends on frame position
/// `j + min_frames_l3 - 1`.
fn combined_inputs(
    config: &HierarchyConfig,
    layers: [&GasGraph; 4],
    poses: &[PoseVector],
) -> Result<Vec<Vec<f64>>, GasError> {
    let [pose_l1, pose_l2, vel_l1, vel_l2] = layers;
    let pose_values: Vec<Vec<f64>> = poses.iter().map(|p| p.values.clone()).collect();
    let pose_w = windowed(pose_l1, &pose_values, &config.pose_l2)?;
    let vel_w = windowed(vel_l1, &velocity_values(poses), &config.vel_l2)?;
    let pose_r2 = remap_sequence(pose_l2, &pose_w)?;
    let vel_r2 = remap_sequence(vel_l2, &vel_w)?;
    // pose_r2[i] ends on frame i + span - 1, vel_r2[i] on frame i + span
    let combined: Vec<Vec<f64>> = vel_r2
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut c = pose_r2[i + 1].clone();
            c.extend_from_slice(v);
            c
        })
        .collect();
    Ok(dilated_windows(&combined, config.combined_l3.window, config.combined_l3.dilation)
        .into_iter()
        .map(|w| w.values)
        .collect())
}

/// Trains the hierarchy on preconditioned sequences (mirrored copies are
/// separate sequences, so windows never cross a recording boundary).
pub fn train_hierarchy(
    sequences: &[PoseSequence],
    config: &HierarchyConfig,
    seed: u64,
) -> Result<HierarchyModel, HierarchyError> {
    config.validate()?;
    let poses: Vec<&[f64]> = sequences
        .iter()
        .flat_map(|s| s.poses.iter().map(|p| p.values.as_slice()))
        .collect();
    let pose_labels: Vec<ActivityLabel> = sequences
        .iter()
        .flat_map(|s| std::iter::repeat_n(s.label, s.poses.len()))
        .collect();
    if poses.is_empty() {
        return Err(HierarchyError::EmptyTraining);
    }
    let pose_l1 = config.pose_l1.engine.train(&poses, crate::derive_seed(seed, 1))?;

    let upper = config.classify_at == ClassifyAt::L3Combined || config.train_upper_layers;
    if !upper {
        let labels = label_prototypes(&pose_l1, &poses, &pose_labels)?;
        return Ok(HierarchyModel {
            config: config.clone(),
            pose_l1,
            pose_l2: None,
            vel_l1: None,
            vel_l2: None,
            combined_l3: None,
            labels,
        });
    }

    let (pose_l2, vel) = rayon::join(
        || -> Result<GasGraph, GasError> {
            let mut data = Vec::new();
            for s in sequences {
                let values: Vec<Vec<f64>> = s.poses.iter().map(|p| p.values.clone()).collect();
                data.extend(windowed(&pose_l1, &values, &config.pose_l2)?);
            }
            config.pose_l2.engine.train(&data, crate::derive_seed(seed, 2))
        },
        || -> Result<(GasGraph, GasGraph), GasError> {
            let per_seq: Vec<Vec<Vec<f64>>> = sequences.iter().map(|s| velocity_values(&s.poses)).collect();
            let all: Vec<&[f64]> = per_seq.iter().flatten().map(Vec::as_slice).collect();
            let vel_l1 = config.vel_l1.engine.train(&all, crate::derive_seed(seed, 3))?;
            let mut data = Vec::new();
            for v in &per_seq {
                data.extend(windowed(&vel_l1, v, &config.vel_l2)?);
            }
            let vel_l2 = config.vel_l2.engine.train(&data, crate::derive_seed(seed, 4))?;
            Ok((vel_l1, vel_l2))
        },
    );
    let pose_l2 = pose_l2?;
    let (vel_l1, vel_l2) = vel?;

    let mut l3_data = Vec::new();
    let mut l3_labels = Vec::new();
    for s in sequences {
        if s.poses.len() < config.min_frames_l3() {
            continue;
        }
        let inputs = combined_inputs(config, [&pose_l1, &pose_l2, &vel_l1, &vel_l2], &s.poses)?;
        l3_labels.extend(std::iter::repeat_n(s.label, inputs.len()));
        l3_data.extend(inputs);
    }
    let combined_l3 = config.combined_l3.engine.train(&l3_data, crate::derive_seed(seed, 5))?;

    let labels = match config.classify_at {
        ClassifyAt::L1Pose => label_prototypes(&pose_l1, &poses, &pose_labels)?,
        ClassifyAt::L3Combined => label_prototypes(&combined_l3, &l3_data, &l3_labels)?,
    };
    Ok(HierarchyModel {
        config: config.clone(),
        pose_l1,
        pose_l2: Some(pose_l2),
        vel_l1: Some(vel_l1),
        vel_l2: Some(vel_l2),
        combined_l3: Some(combined_l3),
        labels,
    })
}

impl HierarchyModel {
    pub fn classifying_graph(&self) -> &GasGraph {
        match self.config.classify_at {
            ClassifyAt::L1Pose => &self.pose_l1,
            ClassifyAt::L3Combined => self.combined_l3.as_ref().expect("layer 3 trained"),
        }
    }

    fn upper_layers(&self) -> Option<[&GasGraph; 4]> {
        Some([
            &self.pose_l1,
            self.pose_l2.as_ref()?,
            self.vel_l1.as_ref()?,
            self.vel_l2.as_ref()?,
        ])
    }

    /// Layer-3 input vectors of a recording (empty when it is too short).
    pub fn layer3_inputs(&self, poses: &[PoseVector]) -> Result<Vec<Vec<f64>>, HierarchyError> {
        let layers = self
            .upper_layers()
            .ok_or_else(|| HierarchyError::InvalidSpec("upper layers were not trained".into()))?;
        if poses.len() < self.config.min_frames_l3() {
            return Ok(Vec::new());
        }
        Ok(combined_inputs(&self.config, layers, poses)?)
    }

    /// Per-step labels of a preconditioned recording plus the majority vote.
    pub fn classify(&self, poses: &[PoseVector]) -> Result<Classification, HierarchyError> {
        let graph = self.classifying_graph();
        let steps: Vec<StepLabel> = match self.config.classify_at {
            ClassifyAt::L1Pose => poses
                .iter()
                .map(|p| {
                    let (id, _) = graph.quantize(&p.values)?;
                    Ok(StepLabel {
                        frame_index: p.frame_index,
                        label: self.labels[&id],
                    })
                })
                .collect::<Result<_, GasError>>()?,
            ClassifyAt::L3Combined => {
                let needed = self.config.min_frames_l3();
                if poses.len() < needed {
                    return Err(HierarchyError::TooShortRecording {
                        frames: poses.len(),
                        needed,
                    });
                }
                let inputs = self.layer3_inputs(poses)?;
                inputs
                    .iter()
                    .enumerate()
                    .map(|(j, x)| {
                        let (id, _) = graph.quantize(x)?;
                        Ok(StepLabel {
                            frame_index: poses[j + needed - 1].frame_index,
                            label: self.labels[&id],
                        })
                    })
                    .collect::<Result<_, GasError>>()?
            }
        };
        let majority = majority_label(steps.iter().map(|s| s.label));
        Ok(Classification { steps, majority })
    }

    /// Writes `manifest.json` plus one JSON document per trained layer.
    pub fn save(&self, dir: &Path) -> Result<(), HierarchyError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| HierarchyError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let mut layers = BTreeMap::new();
        for (name, graph) in self.named_layers() {
            let file = format!("{name}.json");
            let path = dir.join(&file);
            fs::write(&path, graph.to_json()).map_err(io(&path))?;
            layers.insert(name.to_string(), file);
        }
        let manifest = Manifest {
            config: self.config.clone(),
            layers,
            labels: self.labels.iter().map(|(&node, &label)| LabelEntry { node, label }).collect(),
        };
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(io(&path))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, HierarchyError> {
        let read = |path: &Path| {
            fs::read_to_string(path).map_err(|source| HierarchyError::Io {
                path: path.to_path_buf(),
                source,
            })
        };
        let manifest: Manifest = serde_json::from_str(&read(&dir.join("manifest.json"))?)?;
        let mut graphs = BTreeMap::new();
        for (name, file) in &manifest.layers {
            graphs.insert(name.clone(), GasGraph::from_json(&read(&dir.join(file))?)?);
        }
        let pose_l1 = graphs
            .remove("pose_l1")
            .ok_or_else(|| HierarchyError::InvalidSpec("manifest lacks pose_l1".into()))?;
        let model = HierarchyModel {
            config: manifest.config,
            pose_l1,
            pose_l2: graphs.remove("pose_l2"),
            vel_l1: graphs.remove("vel_l1"),
            vel_l2: graphs.remove("vel_l2"),
            combined_l3: graphs.remove("combined_l3"),
            labels: manifest.labels.into_iter().map(|e| (e.node, e.label)).collect(),
        };
        let graph = match model.config.classify_at {
            ClassifyAt::L1Pose => Some(&model.pose_l1),
            ClassifyAt::L3Combined => model.combined_l3.as_ref(),
        }
        .ok_or_else(|| HierarchyError::InvalidSpec("classifying layer missing".into()))?;
        if graph.node_ids().any(|id| !model.labels.contains_key(&id)) {
            return Err(HierarchyError::InvalidSpec("unlabelled prototype in classifying layer".into()));
        }
        Ok(model)
    }

    fn named_layers(&self) -> Vec<(&'static str, &GasGraph)> {
        let mut out = vec![("pose_l1", &self.pose_l1)];
        for (name, g) in [
            ("pose_l2", &self.pose_l2),
            ("vel_l1", &self.vel_l1),
            ("vel_l2", &self.vel_l2),
            ("combined_l3", &self.combined_l3),
        ] {
            if let Some(g) = g {
                out.push((name, g));
            }
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct LabelEntry {
    node: NodeId,
    label: ActivityLabel,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: HierarchyConfig,
    layers: BTreeMap<String, String>,
    labels: Vec<LabelEntry>,
}

/// Most frequent label; ties go to the earliest label in canonical order.
pub fn majority_label(labels: impl IntoIterator<Item = ActivityLabel>) -> Option<ActivityLabel> {
    let mut counts = [0usize; 14];
    let mut any = false;
    for l in labels {
        counts[l.index()] += 1;
        any = true;
    }
    if !any {
        return None;
    }
    let mut best = 0;
    for i in 1..counts.len() {
        if counts[i] > counts[best] {
            best = i;
        }
    }
    Some(ActivityLabel::ALL[best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gas::OutlierGate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_gwr() -> GasEngine {
        GasEngine::Gwr(GwrParams {
            max_nodes: 40,
            epochs: 2,
            ..GwrParams::default()
        })
    }

    fn sequence(label: ActivityLabel, offset: f64, frames: usize, rng: &mut ChaCha8Rng) -> PoseSequence {
        PoseSequence {
            recording: 0,
            mirrored: false,
            label,
            subject: 1,
            poses: (0..frames)
                .map(|k| PoseVector {
                    values: (0..POSE_DIM)
                        .map(|d| offset + (k as f64 * 0.3 + d as f64).sin() + rng.random_range(-0.05..0.05))
                        .collect(),
                    frame_index: k as u32 + 1,
                })
                .collect(),
        }
    }

    fn toy_sequences() -> Vec<PoseSequence> {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        [ActivityLabel::BrushingTeeth, ActivityLabel::RinsingMouth, ActivityLabel::Still]
            .iter()
            .enumerate()
            .flat_map(|(c, &l)| {
                (0..2)
                    .map(|_| sequence(l, 20.0 * c as f64, 24, &mut rng))
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    #[test]
    fn remap_identity_and_single_node() {
        let weights = vec![vec![1.0, 2.0], vec![-3.0, 0.5]];
        let g = GasGraph::from_weights(&weights).unwrap();
        assert_eq!(remap_sequence(&g, &weights).unwrap(), weights);

        let single = GasGraph::from_weights(&[vec![7.0, 7.0]]).unwrap();
        let out = remap_sequence(&single, &[vec![0.0, 0.0], vec![100.0, -4.0]]).unwrap();
        assert!(out.iter().all(|v| *v == vec![7.0, 7.0]));
        assert!(remap_sequence(&single, &[vec![0.0]]).is_err());
    }

    #[test]
    fn remap_outputs_are_nearest_node_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let weights: Vec<Vec<f64>> = (0..15).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let g = GasGraph::from_weights(&weights).unwrap();
        let xs: Vec<Vec<f64>> = (0..20).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let out = remap_sequence(&g, &xs).unwrap();
        for (x, y) in xs.iter().zip(&out) {
            assert!(weights.contains(y));
            let min = weights.iter().map(|w| linalg::distance(w, x)).fold(f64::INFINITY, f64::min);
            assert_eq!(linalg::distance(y, x), min);
        }
    }

    #[test]
    fn labelling_by_nearest_training_vector() {
        use ActivityLabel::*;
        let g = GasGraph::from_weights(&[vec![-9.0], vec![3.0]]).unwrap();
        let data = vec![vec![-10.0], vec![10.0], vec![3.0]];
        let labels = label_prototypes(&g, &data, &[Random, Still, Still]).unwrap();
        assert_eq!(labels[&0], Random);
        assert_eq!(labels[&1], Still);

        // tie between two training vectors: the earlier one wins
        let g = GasGraph::from_weights(&[vec![0.0]]).unwrap();
        let tie = label_prototypes(&g, &[vec![1.0], vec![-1.0]], &[Still, Random]).unwrap();
        assert_eq!(tie[&0], Still);

        let empty: Vec<Vec<f64>> = vec![];
        assert!(matches!(label_prototypes(&g, &empty, &[]), Err(HierarchyError::EmptyTraining)));
    }

    #[test]
    fn labelling_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let nodes: Vec<Vec<f64>> = (0..100).map(|_| (0..4).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let data: Vec<Vec<f64>> = (0..300).map(|_| (0..4).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let labels: Vec<ActivityLabel> = (0..300).map(|i| ActivityLabel::ALL[i % 14]).collect();
        let g = GasGraph::from_weights(&nodes).unwrap();
        let got = label_prototypes(&g, &data, &labels).unwrap();
        for (id, w) in nodes.iter().enumerate() {
            let mut ranked: Vec<(f64, usize)> = data.iter().enumerate().map(|(i, d)| (linalg::distance(w, d), i)).collect();
            ranked.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(got[&(id as NodeId)], labels[ranked[0].1]);
        }
    }

    #[test]
    fn receptive_field_and_dimensions() {
        let c = HierarchyConfig::uniform(small_gwr(), ClassifyAt::L3Combined);
        assert_eq!(c.receptive_field_steps(), 9);
        assert_eq!(c.min_frames_l3(), 10);
        assert_eq!(c.layer3_input_dim(), 810);
        let mut bad = c.clone();
        bad.pose_l2.window = 4;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn layer1_model_bounds_and_memorization() {
        let seqs = toy_sequences();
        let cfg = HierarchyConfig::uniform(small_gwr(), ClassifyAt::L1Pose);
        let model = train_hierarchy(&seqs, &cfg, 3).unwrap();
        assert!(model.pose_l1.len() <= 40);
        assert!(model.pose_l2.is_none());
        let covered: std::collections::BTreeSet<_> = model.labels.values().collect();
        assert!(covered.len() >= 2);
        assert_eq!(model.labels.len(), model.pose_l1.len());

        let out = model.classify(&seqs[0].poses).unwrap();
        assert_eq!(out.steps.len(), seqs[0].poses.len());
        assert!(out.steps.iter().all(|s| s.label == seqs[0].label));
        assert_eq!(out.majority, Some(seqs[0].label));
    }

    #[test]
    fn layer3_model_shapes() {
        let seqs = toy_sequences();
        let cfg = HierarchyConfig::uniform(small_gwr(), ClassifyAt::L3Combined);
        let model = train_hierarchy(&seqs, &cfg, 3).unwrap();
        assert_eq!(model.pose_l2.as_ref().unwrap().dimension(), 3 * POSE_DIM);
        assert_eq!(model.vel_l2.as_ref().unwrap().dimension(), 3 * POSE_DIM);
        assert_eq!(model.combined_l3.as_ref().unwrap().dimension(), 810);
        assert_eq!(model.labels.len(), model.combined_l3.as_ref().unwrap().len());

        let out = model.classify(&seqs[2].poses).unwrap();
        assert_eq!(out.steps.len(), 24 - 9);
        assert_eq!(out.steps[0].frame_index, 10);
        assert!(matches!(
            model.classify(&seqs[2].poses[..9]),
            Err(HierarchyError::TooShortRecording { frames: 9, needed: 10 })
        ));
    }

    #[test]
    fn pose_part_of_layer3_spans_nine_frames() {
        let seqs = toy_sequences();
        let cfg = HierarchyConfig::uniform(small_gwr(), ClassifyAt::L3Combined);
        let model = train_hierarchy(&seqs, &cfg, 3).unwrap();
        // Bypass remapping: with every node at a distinct training pose, a
        // perturbation is visible only where the windows actually reach.
        let poses = &seqs[0].poses;
        let base = model.layer3_inputs(poses).unwrap();
        let target = 12usize;
        let mut perturbed = poses.clone();
        for v in perturbed[target].values.iter_mut() {
            *v += 1000.0;
        }
        let moved = model.layer3_inputs(&perturbed).unwrap();
        let block = 3 * POSE_DIM;
        let pose_changed: Vec<usize> = (0..base.len())
            .filter(|&j| {
                (0..3).any(|k| {
                    let s = k * 2 * block;
                    base[j][s..s + block] != moved[j][s..s + block]
                })
            })
            .collect();
        // output j ends on frame position j + 9; a pose change can reach at
        // most the 9 outputs ending on target..=target+8
        assert!(pose_changed.iter().all(|&j| (target..=target + 8).contains(&(j + 9))));
        assert!(!pose_changed.is_empty());
    }

    #[test]
    fn single_prototype_model_always_predicts_its_label() {
        let seqs = toy_sequences();
        let mut model = train_hierarchy(&seqs, &HierarchyConfig::uniform(small_gwr(), ClassifyAt::L1Pose), 1).unwrap();
        model.pose_l1 = GasGraph::from_weights(&[vec![0.0; POSE_DIM]]).unwrap();
        model.labels = BTreeMap::from([(0, ActivityLabel::Still)]);
        for s in &seqs {
            let out = model.classify(&s.poses).unwrap();
            assert!(out.steps.iter().all(|x| x.label == ActivityLabel::Still));
        }
    }

    #[test]
    fn training_is_deterministic_and_serializable() {
        let seqs = toy_sequences();
        let mut engine = small_gwr();
        if let GasEngine::Gwr(p) = &mut engine {
            p.gate = OutlierGate::Off;
        }
        let cfg = HierarchyConfig::uniform(engine, ClassifyAt::L3Combined);
        let a = train_hierarchy(&seqs, &cfg, 77).unwrap();
        let b = train_hierarchy(&seqs, &cfg, 77).unwrap();
        assert_eq!(a, b);

        let dir = tempfile::tempdir().unwrap();
        a.save(dir.path()).unwrap();
        let back = HierarchyModel::load(dir.path()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn majority_ties_use_canonical_order() {
        use ActivityLabel::*;
        assert_eq!(majority_label([Still, Random, Random, Still]), Some(Random));
        assert_eq!(majority_label([Still, Still, Random]), Some(Still));
        assert_eq!(majority_label([]), None);
    }
}
