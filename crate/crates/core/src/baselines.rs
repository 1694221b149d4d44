//! Non-gas baselines: exact k-nearest neighbours and a one-vs-rest linear SVM.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::ActivityLabel;
use crate::linalg;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("expected dimension {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no training vectors")]
    EmptyTraining,
    #[error("training data contains a single class ({0})")]
    SingleClass(ActivityLabel),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

fn check_dim(expected: usize, x: &[f64]) -> Result<(), BaselineError> {
    if x.len() != expected {
        return Err(BaselineError::DimensionMismatch {
            expected,
            found: x.len(),
        });
    }
    Ok(())
}

/// Stored training vectors in one flat buffer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    dimension: usize,
    k: usize,
    vectors: Vec<f64>,
    labels: Vec<ActivityLabel>,
}

impl KnnModel {
    pub fn new<V: AsRef<[f64]>>(vectors: &[V], labels: &[ActivityLabel], k: usize) -> Result<Self, BaselineError> {
        assert_eq!(vectors.len(), labels.len(), "one label per vector");
        if vectors.is_empty() {
            return Err(BaselineError::EmptyTraining);
        }
        if k == 0 || k > vectors.len() {
            return Err(BaselineError::InvalidParams(format!(
                "k = {k} with {} stored vectors",
                vectors.len()
            )));
        }
        let dimension = vectors[0].as_ref().len();
        let mut flat = Vec::with_capacity(dimension * vectors.len());
        for v in vectors {
            check_dim(dimension, v.as_ref())?;
            flat.extend_from_slice(v.as_ref());
        }
        Ok(Self {
            dimension,
            k,
            vectors: flat,
            labels: labels.to_vec(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Same store, different neighbour count.
    pub fn with_k(&self, k: usize) -> Result<Self, BaselineError> {
        if k == 0 || k > self.len() {
            return Err(BaselineError::InvalidParams(format!("k = {k} with {} stored vectors", self.len())));
        }
        Ok(Self { k, ..self.clone() })
    }

    /// Indices of the `k` nearest stored vectors, closest first; equal
    /// distances keep the earlier index first.
    pub fn nearest(&self, x: &[f64], k: usize) -> Result<Vec<usize>, BaselineError> {
        check_dim(self.dimension, x)?;
        let k = k.min(self.len());
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        for (i, v) in self.vectors.chunks_exact(self.dimension).enumerate() {
            let d = linalg::squared_distance(v, x);
            if best.len() == k && d >= best[k - 1].0 {
                continue;
            }
            // later indices go after existing equal distances
            let pos = best.partition_point(|&(bd, _)| bd <= d);
            best.insert(pos, (d, i));
            best.truncate(k);
        }
        Ok(best.into_iter().map(|(_, i)| i).collect())
    }

    pub fn predict(&self, x: &[f64]) -> Result<ActivityLabel, BaselineError> {
        let idx = self.nearest(x, self.k)?;
        Ok(vote(idx.iter().map(|&i| self.labels[i])).expect("k >= 1"))
    }

    pub fn predict_many<V: AsRef<[f64]> + Sync>(&self, xs: &[V]) -> Result<Vec<ActivityLabel>, BaselineError> {
        xs.par_iter().map(|x| self.predict(x.as_ref())).collect()
    }
}

fn vote(labels: impl Iterator<Item = ActivityLabel>) -> Option<ActivityLabel> {
    crate::hierarchy::majority_label(labels)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SvmBatch {
    /// One Pegasos update per shuffled sample; the model is the t-weighted average iterate.
    Stochastic,
    /// Subgradient of the full objective at every step.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub lambda: f64,
    pub epochs: usize,
    pub batch: SvmBatch,
    /// Full-batch steps per epoch (ignored in stochastic mode).
    pub full_batch_steps: usize,
    /// Keep weights inside the ball of radius 1/sqrt(lambda).
    pub project: bool,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            epochs: 20,
            batch: SvmBatch::Stochastic,
            full_batch_steps: 100,
            project: true,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<(), BaselineError> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(BaselineError::InvalidParams("svm: lambda must be positive".into()));
        }
        if self.epochs == 0 || (self.batch == SvmBatch::Full && self.full_batch_steps == 0) {
            return Err(BaselineError::InvalidParams("svm: need at least one step".into()));
        }
        Ok(())
    }
}

/// Binary machine; the bias is stored as the last weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryMachine {
    pub label: ActivityLabel,
    pub weights: Vec<f64>,
}

impl BinaryMachine {
    pub fn bias(&self) -> f64 {
        *self.weights.last().expect("bias slot")
    }

    fn score(&self, z: &[f64]) -> f64 {
        let d = z.len();
        linalg::dot(&self.weights[..d], z) + self.weights[d]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    pub params: SvmParams,
    /// Per-dimension standardization fitted on the training data.
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// One machine per training class, in canonical label order.
    pub machines: Vec<BinaryMachine>,
}

/// Regularized hinge objective, summed over the binary machines, after each epoch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SvmTrace {
    pub objective: Vec<f64>,
}

fn standardizer<V: AsRef<[f64]>>(xs: &[V], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = xs.len() as f64;
    let mut mean = vec![0.0; dim];
    for x in xs {
        for (m, v) in mean.iter_mut().zip(x.as_ref()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for x in xs {
        for ((s, v), m) in var.iter_mut().zip(x.as_ref()).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let scale = var
        .into_iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

fn standardize(x: &[f64], mean: &[f64], scale: &[f64]) -> Vec<f64> {
    x.iter().zip(mean).zip(scale).map(|((v, m), s)| (v - m) / s).collect()
}

/// `(lambda/2)|w|^2 + mean hinge`, with `z` already augmented by a trailing 1.
fn objective(w: &[f64], z: &[Vec<f64>], y: &[f64], lambda: f64) -> f64 {
    let hinge: f64 = z.iter().zip(y).map(|(z, y)| (1.0 - y * linalg::dot(w, z)).max(0.0)).sum();
    0.5 * lambda * linalg::dot(w, w) + hinge / z.len() as f64
}

fn project(w: &mut [f64], lambda: f64) {
    let norm = linalg::dot(w, w).sqrt();
    let radius = 1.0 / lambda.sqrt();
    if norm > radius {
        w.iter_mut().for_each(|v| *v *= radius / norm);
    }
}

fn train_binary(z: &[Vec<f64>], y: &[f64], params: &SvmParams, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let dim = z[0].len();
    let lambda = params.lambda;
    let mut w = vec![0.0; dim];
    let mut trace = Vec::with_capacity(params.epochs);
    let mut t = 0u64;
    match params.batch {
        SvmBatch::Stochastic => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut order: Vec<usize> = (0..z.len()).collect();
            // iterates averaged with weight proportional to t
            let mut avg = vec![0.0; dim];
            for _ in 0..params.epochs {
                order.shuffle(&mut rng);
                for &i in &order {
                    t += 1;
                    let eta = 1.0 / (lambda * t as f64);
                    let margin = y[i] * linalg::dot(&w, &z[i]);
                    let shrink = 1.0 - eta * lambda;
                    w.iter_mut().for_each(|v| *v *= shrink);
                    if margin < 1.0 {
                        for (v, zi) in w.iter_mut().zip(&z[i]) {
                            *v += eta * y[i] * zi;
                        }
                    }
                    if params.project {
                        project(&mut w, lambda);
                    }
                    let k = 2.0 / (t as f64 + 1.0);
                    for (a, v) in avg.iter_mut().zip(&w) {
                        *a += k * (v - *a);
                    }
                }
                trace.push(objective(&avg, z, y, lambda));
            }
            w = avg;
        }
        SvmBatch::Full => {
            let n = z.len() as f64;
            let mut grad = vec![0.0; dim];
            for _ in 0..params.epochs {
                for _ in 0..params.full_batch_steps {
                    t += 1;
                    let eta = 1.0 / (lambda * t as f64);
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    for (zi, yi) in z.iter().zip(y) {
                        if yi * linalg::dot(&w, zi) < 1.0 {
                            for (g, v) in grad.iter_mut().zip(zi) {
                                *g += yi * v;
                            }
                        }
                    }
                    let shrink = 1.0 - eta * lambda;
                    for (v, g) in w.iter_mut().zip(&grad) {
                        *v = shrink * *v + eta * g / n;
                    }
                    if params.project {
                        project(&mut w, lambda);
                    }
                }
                trace.push(objective(&w, z, y, lambda));
            }
        }
    }
    (w, trace)
}

pub fn svm_train<V: AsRef<[f64]>>(
    xs: &[V],
    labels: &[ActivityLabel],
    params: &SvmParams,
    seed: u64,
) -> Result<LinearSvmModel, BaselineError> {
    svm_train_traced(xs, labels, params, seed).map(|(m, _)| m)
}

/// [`svm_train`] that also returns the per-epoch objective.
pub fn svm_train_traced<V: AsRef<[f64]>>(
    xs: &[V],
    labels: &[ActivityLabel],
    params: &SvmParams,
    seed: u64,
) -> Result<(LinearSvmModel, SvmTrace), BaselineError> {
    assert_eq!(xs.len(), labels.len(), "one label per vector");
    params.validate()?;
    if xs.is_empty() {
        return Err(BaselineError::EmptyTraining);
    }
    let dim = xs[0].as_ref().len();
    for x in xs {
        check_dim(dim, x.as_ref())?;
    }
    let classes: Vec<ActivityLabel> = labels.iter().copied().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    if classes.len() < 2 {
        return Err(BaselineError::SingleClass(classes[0]));
    }
    let (mean, scale) = standardizer(xs, dim);
    let z: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| {
            let mut v = standardize(x.as_ref(), &mean, &scale);
            v.push(1.0);
            v
        })
        .collect();

    let results: Vec<(BinaryMachine, Vec<f64>)> = classes
        .par_iter()
        .map(|&c| {
            let y: Vec<f64> = labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
            let (weights, trace) = train_binary(&z, &y, params, crate::derive_seed(seed, c.index() as u64));
            (BinaryMachine { label: c, weights }, trace)
        })
        .collect();

    let mut objective = vec![0.0; params.epochs];
    let mut machines = Vec::with_capacity(results.len());
    for (m, trace) in results {
        for (o, t) in objective.iter_mut().zip(&trace) {
            *o += t;
        }
        machines.push(m);
    }
    Ok((
        LinearSvmModel {
            params: params.clone(),
            mean,
            scale,
            machines,
        },
        SvmTrace { objective },
    ))
}

impl LinearSvmModel {
    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    /// Decision values `w_c . x + b_c`, in machine order.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>, BaselineError> {
        check_dim(self.dimension(), x)?;
        let z = standardize(x, &self.mean, &self.scale);
        Ok(self.machines.iter().map(|m| m.score(&z)).collect())
    }

    pub fn predict(&self, x: &[f64]) -> Result<ActivityLabel, BaselineError> {
        let scores = self.scores(x)?;
        let mut best = 0;
        for (i, s) in scores.iter().enumerate().skip(1) {
            if *s > scores[best] {
                best = i;
            }
        }
        Ok(self.machines[best].label)
    }

    pub fn predict_many<V: AsRef<[f64]> + Sync>(&self, xs: &[V]) -> Result<Vec<ActivityLabel>, BaselineError> {
        xs.par_iter().map(|x| self.predict(x.as_ref())).collect()
    }
}
