//! Confusion matrices, accuracy aggregation over subjects and scenes, and the
//! leave-one-subject-out experiment driver.
//!
//! Accuracies are aggregated in two stages: the mean over held-out subjects
//! of each partition (scene), then the mean over partitions. Confusion
//! matrices count individual poses (or evaluable time steps for the
//! windowed gas layer), not recordings.

mod report;

pub use report::{
    confusion_csv, confusion_svg, grid_csv, results_csv, table2_csv, write_report_files, GridCell,
};

use std::collections::BTreeMap;
use std::fmt;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{svm_train, BaselineError, KnnModel, SvmParams};
use crate::dataset::{ActivityLabel, Corpus, DatasetError, Scene, SceneTable, SubjectId};
use crate::hierarchy::{train_hierarchy, HierarchyConfig, HierarchyError};
use crate::precondition::{apply_preconditioning, PreconditionMode, Role};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("label {0} is not in the confusion matrix class list")]
    UnknownLabel(ActivityLabel),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("need at least 2 subjects, corpus has {0}")]
    TooFewSubjects(usize),
    #[error("no scene/subject unit had both training and test data")]
    NoEvaluableUnits,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: Vec<ActivityLabel>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<ActivityLabel>) -> Self {
        let n = classes.len();
        Self {
            classes,
            counts: vec![vec![0; n]; n],
        }
    }

    /// Builds a matrix from a full table of counts.
    pub fn from_counts(classes: Vec<ActivityLabel>, counts: Vec<Vec<u64>>) -> Self {
        assert_eq!(counts.len(), classes.len(), "square table");
        assert!(counts.iter().all(|r| r.len() == classes.len()), "square table");
        Self { classes, counts }
    }

    pub fn classes(&self) -> &[ActivityLabel] {
        &self.classes
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    fn position(&self, label: ActivityLabel) -> Result<usize, EvalError> {
        self.classes
            .iter()
            .position(|&c| c == label)
            .ok_or(EvalError::UnknownLabel(label))
    }

    pub fn accumulate(&mut self, truth: ActivityLabel, predicted: ActivityLabel) -> Result<(), EvalError> {
        let (r, c) = (self.position(truth)?, self.position(predicted)?);
        self.counts[r][c] += 1;
        Ok(())
    }

    /// Adds `other` cell by cell, matching classes by label.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<(), EvalError> {
        for (i, &t) in other.classes.iter().enumerate() {
            let r = self.position(t)?;
            for (j, &p) in other.classes.iter().enumerate() {
                if other.counts[i][j] > 0 {
                    let c = self.position(p)?;
                    self.counts[r][c] += other.counts[i][j];
                }
            }
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> Result<f64, EvalError> {
        match self.total() {
            0 => Err(EvalError::EmptyMatrix),
            t => Ok(self.trace() as f64 / t as f64),
        }
    }

    /// Per-class precision and recall; `None` where the denominator is zero.
    pub fn precision_recall(&self) -> Vec<ClassScores> {
        let n = self.classes.len();
        (0..n)
            .map(|i| {
                let row: u64 = self.counts[i].iter().sum();
                let col: u64 = (0..n).map(|r| self.counts[r][i]).sum();
                let d = self.counts[i][i] as f64;
                ClassScores {
                    label: self.classes[i],
                    precision: (col > 0).then(|| d / col as f64),
                    recall: (row > 0).then(|| d / row as f64),
                }
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub label: ActivityLabel,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

/// Two-stage mean: over the values of each group, then over the groups.
/// Empty groups are left out.
pub fn mean_of_means<I, G>(groups: I) -> Option<f64>
where
    I: IntoIterator<Item = G>,
    G: AsRef<[f64]>,
{
    let means: Vec<f64> = groups.into_iter().filter_map(|g| mean(g.as_ref())).collect();
    mean(&means)
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Mean and sample standard deviation of the values present.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let m = mean(values);
        let sd = match (m, n) {
            (Some(m), n) if n >= 2 => {
                Some((values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64).sqrt())
            }
            _ => None,
        };
        Self { mean: m, sd, n }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Scene(Scene),
    AllActions,
}

impl Partition {
    fn tag(self) -> u64 {
        match self {
            Partition::Scene(s) => Scene::ALL.iter().position(|&x| x == s).expect("scene") as u64,
            Partition::AllActions => 15,
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Partition::Scene(s) => f.write_str(s.name()),
            Partition::AllActions => f.write_str("all actions"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenePolicy {
    /// Separate models per scene, trained and tested on that scene's activities.
    PerScene,
    /// A single model over all 14 labels.
    AllActions,
}

impl ScenePolicy {
    pub fn name(self) -> &'static str {
        match self {
            ScenePolicy::PerScene => "per_scene",
            ScenePolicy::AllActions => "all_actions",
        }
    }
}

impl std::str::FromStr for ScenePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "per_scene" => Ok(ScenePolicy::PerScene),
            "all_actions" => Ok(ScenePolicy::AllActions),
            other => Err(format!("unknown scene policy `{other}` (per_scene, all_actions)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum MethodSpec {
    Svm(SvmParams),
    Knn { k: usize },
    Gwr(HierarchyConfig),
    Gng(HierarchyConfig),
}

impl MethodSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MethodSpec::Svm(_) => "svm",
            MethodSpec::Knn { .. } => "knn",
            MethodSpec::Gwr(_) => "gwr",
            MethodSpec::Gng(_) => "gng",
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub seed: u64,
    pub scene_table: SceneTable,
    /// Add `random` and `still` to every scene under the per-scene policy.
    pub include_extras_in_scenes: bool,
}

impl EvalOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            scene_table: SceneTable::default(),
            include_extras_in_scenes: false,
        }
    }

    fn classes(&self, partition: Partition) -> Vec<ActivityLabel> {
        match partition {
            Partition::AllActions => ActivityLabel::ALL.to_vec(),
            Partition::Scene(s) => {
                let mut c = self.scene_table.activities(s).to_vec();
                if self.include_extras_in_scenes {
                    c.extend(ActivityLabel::ALL.iter().filter(|l| l.is_extra()));
                }
                c.sort();
                c
            }
        }
    }

    fn subset(&self, corpus: &Corpus, partition: Partition) -> Corpus {
        match partition {
            Partition::AllActions => corpus.clone(),
            Partition::Scene(s) => {
                let classes = self.classes(partition);
                let mut c = corpus.scene_subset(s, self.include_extras_in_scenes);
                c.recordings.retain(|r| classes.contains(&r.label));
                c
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSubjectResult {
    pub method: String,
    pub mode: PreconditionMode,
    pub partition: Partition,
    pub subject: SubjectId,
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionAccuracy {
    pub partition: Partition,
    /// Mean over held-out subjects.
    pub accuracy: f64,
    pub subjects: usize,
}

/// One row of the per-class table; `label: None` is the partition average.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub partition: Partition,
    pub label: Option<ActivityLabel>,
    pub precision: Stat,
    pub recall: Stat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub method: MethodSpec,
    pub mode: PreconditionMode,
    pub policy: ScenePolicy,
    pub seed: u64,
    pub results: Vec<SceneSubjectResult>,
    pub partitions: Vec<PartitionAccuracy>,
    /// Mean over partitions of the per-partition accuracies.
    pub accuracy: f64,
    pub class_rows: Vec<ClassRow>,
    /// Mean over partitions of the partition-average rows.
    pub global_precision: Option<f64>,
    pub global_recall: Option<f64>,
    /// All results pooled into one 14-class matrix.
    pub pooled: ConfusionMatrix,
    pub pooled_accuracy: f64,
    /// Test recordings too short for the classifying layer.
    pub skipped_recordings: usize,
}

struct UnitOutcome {
    confusion: ConfusionMatrix,
    skipped_recordings: usize,
}

/// Trains `method` on `train` and classifies every test pose of `test`.
/// Returns `None` when the unit has nothing to evaluate.
fn evaluate_unit(
    method: &MethodSpec,
    mode: PreconditionMode,
    train: &Corpus,
    test: &Corpus,
    classes: Vec<ActivityLabel>,
    seed: u64,
) -> Result<Option<UnitOutcome>, EvalError> {
    let tr = apply_preconditioning(train, mode, Role::Train);
    let te = apply_preconditioning(test, mode, Role::Test);
    if tr.pose_count() == 0 || te.pose_count() == 0 {
        return Ok(None);
    }
    let mut confusion = ConfusionMatrix::new(classes);
    let mut skipped_recordings = 0;
    match method {
        MethodSpec::Knn { .. } | MethodSpec::Svm(_) => {
            let xs: Vec<&[f64]> = tr.iter_vectors().map(|(p, ..)| p.values.as_slice()).collect();
            let ys: Vec<ActivityLabel> = tr.iter_vectors().map(|(_, l, ..)| l).collect();
            let qs: Vec<&[f64]> = te.iter_vectors().map(|(p, ..)| p.values.as_slice()).collect();
            let truth: Vec<ActivityLabel> = te.iter_vectors().map(|(_, l, ..)| l).collect();
            let predicted = match method {
                MethodSpec::Knn { k } => KnnModel::new(&xs, &ys, (*k).min(xs.len()))?.predict_many(&qs)?,
                MethodSpec::Svm(p) => svm_train(&xs, &ys, p, seed)?.predict_many(&qs)?,
                _ => unreachable!(),
            };
            for (t, p) in truth.into_iter().zip(predicted) {
                confusion.accumulate(t, p)?;
            }
        }
        MethodSpec::Gwr(config) | MethodSpec::Gng(config) => {
            let model = train_hierarchy(&tr.sequences, config, seed)?;
            let outputs: Vec<_> = te
                .sequences
                .par_iter()
                .map(|s| match model.classify(&s.poses) {
                    Err(HierarchyError::TooShortRecording { .. }) => Ok(None),
                    other => other.map(|c| Some((s.label, c))),
                })
                .collect::<Result<_, _>>()?;
            for out in outputs {
                match out {
                    None => skipped_recordings += 1,
                    Some((truth, c)) => {
                        for step in c.steps {
                            confusion.accumulate(truth, step.label)?;
                        }
                    }
                }
            }
        }
    }
    if confusion.total() == 0 {
        return Ok(None);
    }
    Ok(Some(UnitOutcome {
        confusion,
        skipped_recordings,
    }))
}

fn validate_method(method: &MethodSpec) -> Result<(), EvalError> {
    let check = |config: &HierarchyConfig, want: &str| {
        config.validate()?;
        let engines = [
            &config.pose_l1.engine,
            &config.pose_l2.engine,
            &config.vel_l1.engine,
            &config.vel_l2.engine,
            &config.combined_l3.engine,
        ];
        if engines.iter().any(|e| e.name() != want) {
            return Err(HierarchyError::InvalidSpec(format!("{want} hierarchy with a non-{want} layer")).into());
        }
        Ok::<_, EvalError>(())
    };
    match method {
        MethodSpec::Gwr(c) => check(c, "gwr"),
        MethodSpec::Gng(c) => check(c, "gng"),
        MethodSpec::Knn { k } if *k == 0 => Err(BaselineError::InvalidParams("k must be >= 1".into()).into()),
        MethodSpec::Svm(p) => Ok(p.validate()?),
        _ => Ok(()),
    }
}

/// Leave-one-subject-out evaluation of one (method, preconditioning) cell.
pub fn run_loso_experiment(
    corpus: &Corpus,
    method: &MethodSpec,
    mode: PreconditionMode,
    policy: ScenePolicy,
    options: &EvalOptions,
) -> Result<AggregateReport, EvalError> {
    validate_method(method)?;
    let subjects: Vec<SubjectId> = corpus.subjects().into_iter().collect();
    if subjects.len() < 2 {
        return Err(EvalError::TooFewSubjects(subjects.len()));
    }
    let partitions: Vec<Partition> = match policy {
        ScenePolicy::AllActions => vec![Partition::AllActions],
        ScenePolicy::PerScene => Scene::ALL.iter().map(|&s| Partition::Scene(s)).collect(),
    };
    let units: Vec<(Partition, SubjectId)> = partitions
        .iter()
        .flat_map(|&p| subjects.iter().map(move |&s| (p, s)))
        .collect();

    let outcomes: Vec<Option<UnitOutcome>> = units
        .par_iter()
        .map(|&(partition, subject)| {
            let split = corpus.split_loso(subject)?;
            let train = options.subset(&split.train, partition);
            let test = options.subset(&split.test, partition);
            let classes = options.classes(partition);
            let train_classes = train.labels();
            if train_classes.len() < 2 {
                if !test.is_empty() {
                    warn!(
                        "{} / subject {subject}: training data has {} class(es); unit skipped",
                        partition,
                        train_classes.len()
                    );
                }
                return Ok(None);
            }
            let seed = crate::derive_seed(options.seed, partition.tag() * 256 + subject as u64);
            let out = evaluate_unit(method, mode, &train, &test, classes, seed)?;
            if out.is_none() {
                info!("{} / subject {subject}: no test data; unit skipped", partition);
            }
            Ok(out)
        })
        .collect::<Result<_, EvalError>>()?;

    let mut results = Vec::new();
    let mut skipped_recordings = 0;
    for (&(partition, subject), out) in units.iter().zip(outcomes) {
        if let Some(out) = out {
            skipped_recordings += out.skipped_recordings;
            let accuracy = out.confusion.accuracy()?;
            results.push(SceneSubjectResult {
                method: method.name().to_string(),
                mode,
                partition,
                subject,
                confusion: out.confusion,
                accuracy,
            });
        }
    }
    if results.is_empty() {
        return Err(EvalError::NoEvaluableUnits);
    }
    if skipped_recordings > 0 {
        warn!("{skipped_recordings} test recording(s) too short for the classifying layer");
    }
    aggregate(results, method.clone(), mode, policy, options.seed, skipped_recordings)
}

/// Builds the aggregate report from per-unit results.
pub fn aggregate(
    results: Vec<SceneSubjectResult>,
    method: MethodSpec,
    mode: PreconditionMode,
    policy: ScenePolicy,
    seed: u64,
    skipped_recordings: usize,
) -> Result<AggregateReport, EvalError> {
    let mut by_partition: BTreeMap<Partition, Vec<&SceneSubjectResult>> = BTreeMap::new();
    for r in &results {
        by_partition.entry(r.partition).or_default().push(r);
    }
    let partitions: Vec<PartitionAccuracy> = by_partition
        .iter()
        .map(|(&partition, rs)| PartitionAccuracy {
            partition,
            accuracy: mean(&rs.iter().map(|r| r.accuracy).collect::<Vec<_>>()).expect("non-empty"),
            subjects: rs.len(),
        })
        .collect();
    let accuracy = mean_of_means(
        by_partition
            .values()
            .map(|rs| rs.iter().map(|r| r.accuracy).collect::<Vec<_>>()),
    )
    .ok_or(EvalError::NoEvaluableUnits)?;

    let mut class_rows = Vec::new();
    let mut avg_precision = Vec::new();
    let mut avg_recall = Vec::new();
    for (&partition, rs) in &by_partition {
        let mut per_class: BTreeMap<ActivityLabel, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for r in rs {
            for s in r.confusion.precision_recall() {
                let e = per_class.entry(s.label).or_default();
                e.0.extend(s.precision);
                e.1.extend(s.recall);
            }
        }
        let mut all_p = Vec::new();
        let mut all_r = Vec::new();
        for (label, (p, r)) in per_class {
            all_p.extend(&p);
            all_r.extend(&r);
            class_rows.push(ClassRow {
                partition,
                label: Some(label),
                precision: Stat::of(&p),
                recall: Stat::of(&r),
            });
        }
        let (sp, sr) = (Stat::of(&all_p), Stat::of(&all_r));
        avg_precision.extend(sp.mean);
        avg_recall.extend(sr.mean);
        class_rows.push(ClassRow {
            partition,
            label: None,
            precision: sp,
            recall: sr,
        });
    }

    let mut pooled = ConfusionMatrix::new(ActivityLabel::ALL.to_vec());
    for r in &results {
        pooled.merge(&r.confusion)?;
    }
    let pooled_accuracy = pooled.accuracy()?;
    Ok(AggregateReport {
        method,
        mode,
        policy,
        seed,
        results,
        partitions,
        accuracy,
        class_rows,
        global_precision: mean(&avg_precision),
        global_recall: mean(&avg_recall),
        pooled,
        pooled_accuracy,
        skipped_recordings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic_corpus, SyntheticSpec};
    use crate::hierarchy::{ClassifyAt, GasEngine};
    use crate::gas::GwrParams;
    use proptest::prelude::*;
    use ActivityLabel::*;

    fn two_by_two(counts: [[u64; 2]; 2]) -> ConfusionMatrix {
        ConfusionMatrix::from_counts(vec![BrushingTeeth, Still], counts.iter().map(|r| r.to_vec()).collect())
    }

    #[test]
    fn accumulate_counts() {
        let mut m = ConfusionMatrix::new(vec![BrushingTeeth, Still]);
        m.accumulate(BrushingTeeth, BrushingTeeth).unwrap();
        assert_eq!((m.trace(), m.total()), (1, 1));
        let mut m = ConfusionMatrix::new(vec![BrushingTeeth, Still]);
        m.accumulate(BrushingTeeth, Still).unwrap();
        m.accumulate(Still, BrushingTeeth).unwrap();
        assert_eq!((m.trace(), m.total()), (0, 2));
        assert!(matches!(m.accumulate(Random, Still), Err(EvalError::UnknownLabel(Random))));
    }

    #[test]
    fn accuracy_and_scores() {
        let m = two_by_two([[8, 2], [1, 9]]);
        assert_eq!(m.accuracy().unwrap(), 17.0 / 20.0);
        let s = m.precision_recall();
        assert_eq!(s[0].precision, Some(8.0 / 9.0));
        assert_eq!(s[0].recall, Some(8.0 / 10.0));
        assert_eq!(two_by_two([[3, 0], [0, 4]]).accuracy().unwrap(), 1.0);
        assert_eq!(two_by_two([[0, 3], [4, 0]]).accuracy().unwrap(), 0.0);
        assert!(matches!(two_by_two([[0, 0], [0, 0]]).accuracy(), Err(EvalError::EmptyMatrix)));

        // class 0 never predicted
        let s = two_by_two([[0, 5], [0, 5]]).precision_recall();
        assert_eq!(s[0].precision, None);
        assert_eq!(s[0].recall, Some(0.0));
        assert!(two_by_two([[2, 0], [0, 7]])
            .precision_recall()
            .iter()
            .all(|s| s.precision == Some(1.0) && s.recall == Some(1.0)));
    }

    proptest! {
        #[test]
        fn accumulation_total_and_bounds(pairs in prop::collection::vec((0usize..14, 0usize..14), 1..200)) {
            let mut m = ConfusionMatrix::new(ActivityLabel::ALL.to_vec());
            for &(a, b) in &pairs {
                m.accumulate(ActivityLabel::ALL[a], ActivityLabel::ALL[b]).unwrap();
            }
            prop_assert_eq!(m.total(), pairs.len() as u64);
            let acc = m.accuracy().unwrap();
            prop_assert!((0.0..=1.0).contains(&acc));

            // simultaneous row/column permutation keeps the accuracy
            let mut reversed: Vec<ActivityLabel> = ActivityLabel::ALL.to_vec();
            reversed.reverse();
            let mut p = ConfusionMatrix::new(reversed);
            p.merge(&m).unwrap();
            prop_assert_eq!(p.accuracy().unwrap(), acc);
        }
    }

    #[test]
    fn two_stage_mean() {
        let v = mean_of_means([vec![0.8, 0.6], vec![1.0, 0.6]]).unwrap();
        assert!((v - 0.75).abs() <= 1e-12);
        assert_eq!(mean_of_means([vec![1.0], vec![]]), Some(1.0));
        assert_eq!(mean_of_means(Vec::<Vec<f64>>::new()), None);
    }

    #[test]
    fn sample_standard_deviation() {
        let s = Stat::of(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(s.mean, Some(5.0));
        assert!((s.sd.unwrap() - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(Stat::of(&[1.0]).sd, None);
        assert_eq!(Stat::of(&[]).mean, None);
    }

    fn toy_result(partition: Partition, subject: SubjectId, m: ConfusionMatrix) -> SceneSubjectResult {
        let accuracy = m.accuracy().unwrap();
        SceneSubjectResult {
            method: "knn".into(),
            mode: PreconditionMode::None,
            partition,
            subject,
            confusion: m,
            accuracy,
        }
    }

    #[test]
    fn perfect_toy_aggregates_to_one() {
        let results = [Scene::Bathroom, Scene::Office]
            .iter()
            .flat_map(|&s| (1..=2).map(move |p| toy_result(Partition::Scene(s), p, two_by_two([[1, 0], [0, 1]]))))
            .collect();
        let r = aggregate(results, MethodSpec::Knn { k: 1 }, PreconditionMode::None, ScenePolicy::PerScene, 0, 0).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.pooled.total(), 8);
        assert_eq!(r.global_precision, Some(1.0));
    }

    #[test]
    fn hand_built_aggregation() {
        // accuracies 0.8, 0.6 in one scene and 1.0, 0.6 in another
        let results = vec![
            toy_result(Partition::Scene(Scene::Bathroom), 1, two_by_two([[4, 1], [0, 0]])),
            toy_result(Partition::Scene(Scene::Bathroom), 2, two_by_two([[3, 2], [0, 0]])),
            toy_result(Partition::Scene(Scene::Office), 1, two_by_two([[5, 0], [0, 0]])),
            toy_result(Partition::Scene(Scene::Office), 2, two_by_two([[3, 2], [0, 0]])),
        ];
        let r = aggregate(results, MethodSpec::Knn { k: 1 }, PreconditionMode::None, ScenePolicy::PerScene, 0, 0).unwrap();
        assert!((r.accuracy - 0.75).abs() <= 1e-12);
        assert!((r.partitions[0].accuracy - 0.7).abs() <= 1e-12);
        assert!((r.partitions[1].accuracy - 0.8).abs() <= 1e-12);
        // pooled: 15 correct of 20
        assert_eq!(r.pooled_accuracy, 0.75);
    }

    fn synthetic(classes: usize, frames: usize) -> Corpus {
        generate_synthetic_corpus(SyntheticSpec {
            seed: 11,
            subjects: 4,
            classes,
            frames_per_recording: frames,
        })
        .unwrap()
    }

    #[test]
    fn per_scene_unit_count_and_totals() {
        let corpus = synthetic(14, 20);
        let options = EvalOptions::new(1);
        let r = run_loso_experiment(&corpus, &MethodSpec::Knn { k: 1 }, PreconditionMode::CentreMirror, ScenePolicy::PerScene, &options).unwrap();
        assert_eq!(r.results.len(), 20);
        // every test pose of every scene's activities is counted once per scene
        for scene in Scene::ALL {
            let expected: usize = corpus
                .recordings
                .iter()
                .filter(|rec| rec.scenes.contains(&scene))
                .map(|rec| rec.frames.len())
                .sum();
            let got: u64 = r
                .results
                .iter()
                .filter(|x| x.partition == Partition::Scene(scene))
                .map(|x| x.confusion.total())
                .sum();
            assert_eq!(got, expected as u64, "{scene:?}");
        }
        assert!((0.0..=1.0).contains(&r.accuracy));
    }

    #[test]
    fn all_actions_uses_fourteen_classes() {
        let corpus = synthetic(14, 16);
        let r = run_loso_experiment(&corpus, &MethodSpec::Knn { k: 1 }, PreconditionMode::None, ScenePolicy::AllActions, &EvalOptions::new(3)).unwrap();
        assert_eq!(r.results.len(), 4);
        assert_eq!(r.pooled.classes(), &ActivityLabel::ALL);
        assert_eq!(r.results[0].confusion.classes().len(), 14);
        assert_eq!(r.pooled.total() as usize, corpus.frame_count());
    }

    #[test]
    fn single_class_scenes_are_skipped() {
        // four synthetic classes: three bathroom activities and one kitchen one
        let corpus = synthetic(4, 16);
        let r = run_loso_experiment(&corpus, &MethodSpec::Svm(SvmParams { epochs: 2, ..SvmParams::default() }), PreconditionMode::CentreMirror, ScenePolicy::PerScene, &EvalOptions::new(0)).unwrap();
        assert!(r.results.iter().all(|x| x.partition == Partition::Scene(Scene::Bathroom)));
        assert_eq!(r.results.len(), 4);
    }

    #[test]
    fn gas_hierarchy_runs_and_is_deterministic() {
        let corpus = synthetic(3, 24);
        let engine = GasEngine::Gwr(GwrParams {
            max_nodes: 30,
            epochs: 1,
            ..GwrParams::default()
        });
        let method = MethodSpec::Gwr(HierarchyConfig::uniform(engine, ClassifyAt::L3Combined));
        let options = EvalOptions::new(9);
        let a = run_loso_experiment(&corpus, &method, PreconditionMode::CentreMirror, ScenePolicy::PerScene, &options).unwrap();
        let b = run_loso_experiment(&corpus, &method, PreconditionMode::CentreMirror, ScenePolicy::PerScene, &options).unwrap();
        assert_eq!(a, b);
        // 15 evaluable steps from each 24-frame recording
        let steps: u64 = a.results.iter().map(|r| r.confusion.total()).sum();
        assert_eq!(steps, 15 * corpus.len() as u64);
    }

    #[test]
    fn mismatched_engine_is_rejected() {
        let corpus = synthetic(3, 16);
        let config = HierarchyConfig::uniform(GasEngine::Gng(Default::default()), ClassifyAt::L1Pose);
        let err = run_loso_experiment(&corpus, &MethodSpec::Gwr(config), PreconditionMode::None, ScenePolicy::PerScene, &EvalOptions::new(0));
        assert!(matches!(err, Err(EvalError::Hierarchy(_))));
    }
}
