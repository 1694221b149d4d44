//! In-memory CAD-60 corpus: joints, frames, recordings, labels and scenes.

mod cache;
mod cad60;
mod synthetic;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{load_corpus_cache, read_recording_json, recording_to_json, write_corpus_cache};
pub use cad60::{
    load_corpus, parse_cad60_skeleton_file, write_cad60_corpus, write_cad60_skeleton_file,
    LoadedCorpus, ParsedSkeleton, CAD60_LABEL_FILE, CAD60_TERMINATOR, CAD60_TOKENS_PER_LINE,
};
pub use synthetic::{generate_synthetic_corpus, SyntheticSpec, SYNTHETIC_LABEL_ORDER};

/// Number of tracked joints per skeleton.
pub const JOINT_COUNT: usize = 15;
/// Length of a flattened pose (x, y, z per joint).
pub const POSE_DIM: usize = 3 * JOINT_COUNT;
/// CAD-60 recordings are captured at a constant 30 Hz.
pub const FRAME_RATE_HZ: f64 = 30.0;
/// Subject ids of the CAD-60 protocol.
pub const SUBJECT_IDS: [SubjectId; 4] = [1, 2, 3, 4];

pub type SubjectId = u8;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: expected {expected} comma-separated values, found {found}")]
    MalformedLine {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: {message}")]
    InvalidValue { line: usize, message: String },
    #[error("unknown activity label '{0}'")]
    UnknownLabel(String),
    #[error("unknown scene '{0}'")]
    UnknownScene(String),
    #[error("corpus contains no recordings")]
    EmptyCorpus,
    #[error("invalid count: {0}")]
    InvalidCount(String),
    #[error("subject {0} is not present in the corpus")]
    UnknownSubject(SubjectId),
    #[error("scene table: {0}")]
    SceneTable(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// One tracked landmark, position in millimetres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub confidence: f64,
}

impl Joint {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self {
            x,
            y,
            z,
            confidence: 1.0,
        }
    }

    pub const ORIGIN: Joint = Joint::new(0.0, 0.0, 0.0);

    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.z.is_finite()
            && (0.0..=1.0).contains(&self.confidence)
    }
}

/// Joint slots in the order they appear in a CAD-60 skeleton line: the 11
/// joints that carry an orientation first, then hands and feet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(usize)]
pub enum JointId {
    Head = 0,
    Neck,
    Torso,
    LeftShoulder,
    LeftElbow,
    RightShoulder,
    RightElbow,
    LeftHip,
    LeftKnee,
    RightHip,
    RightKnee,
    LeftHand,
    RightHand,
    LeftFoot,
    RightFoot,
}

impl JointId {
    pub const ALL: [JointId; JOINT_COUNT] = [
        JointId::Head,
        JointId::Neck,
        JointId::Torso,
        JointId::LeftShoulder,
        JointId::LeftElbow,
        JointId::RightShoulder,
        JointId::RightElbow,
        JointId::LeftHip,
        JointId::LeftKnee,
        JointId::RightHip,
        JointId::RightKnee,
        JointId::LeftHand,
        JointId::RightHand,
        JointId::LeftFoot,
        JointId::RightFoot,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// The same joint on the other side of the body; midline joints map to
    /// themselves.
    pub fn contralateral(self) -> JointId {
        use JointId::*;
        match self {
            Head | Neck | Torso => self,
            LeftShoulder => RightShoulder,
            RightShoulder => LeftShoulder,
            LeftElbow => RightElbow,
            RightElbow => LeftElbow,
            LeftHip => RightHip,
            RightHip => LeftHip,
            LeftKnee => RightKnee,
            RightKnee => LeftKnee,
            LeftHand => RightHand,
            RightHand => LeftHand,
            LeftFoot => RightFoot,
            RightFoot => LeftFoot,
        }
    }
}

/// All joint positions of one person at one timestamp.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkeletonFrame {
    pub frame_index: u32,
    pub joints: [Joint; JOINT_COUNT],
}

impl SkeletonFrame {
    pub fn new(frame_index: u32, joints: [Joint; JOINT_COUNT]) -> Self {
        Self {
            frame_index,
            joints,
        }
    }

    pub fn joint(&self, id: JointId) -> &Joint {
        &self.joints[id.index()]
    }

    /// Joint-major flattening: `j1x, j1y, j1z, ..., j15z`.
    pub fn to_pose_values(&self) -> Vec<f64> {
        self.joints
            .iter()
            .flat_map(|j| [j.x, j.y, j.z])
            .collect()
    }

    /// Inverse of [`Self::to_pose_values`]; confidences are set to 1.
    pub fn from_pose_values(frame_index: u32, values: &[f64]) -> Option<Self> {
        if values.len() != POSE_DIM {
            return None;
        }
        let mut joints = [Joint::ORIGIN; JOINT_COUNT];
        for (joint, xyz) in joints.iter_mut().zip(values.chunks_exact(3)) {
            *joint = Joint::new(xyz[0], xyz[1], xyz[2]);
        }
        Some(Self::new(frame_index, joints))
    }
}

macro_rules! activity_labels {
    ($($variant:ident => $name:literal),* $(,)?) => {
        /// The 14 CAD-60 activities. Declaration order is the canonical
        /// order used for confusion-matrix axes and tie-breaking.
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum ActivityLabel {
            $(#[serde(rename = $name)] $variant,)*
        }

        impl ActivityLabel {
            pub const ALL: [ActivityLabel; 14] = [$(ActivityLabel::$variant,)*];

            pub fn name(self) -> &'static str {
                match self {
                    $(ActivityLabel::$variant => $name,)*
                }
            }
        }
    };
}

activity_labels! {
    BrushingTeeth => "brushing teeth",
    CookingChopping => "cooking (chopping)",
    CookingStirring => "cooking (stirring)",
    DrinkingWater => "drinking water",
    OpeningPillContainer => "opening pill container",
    Random => "random",
    RelaxingOnCouch => "relaxing on couch",
    RinsingMouth => "rinsing mouth with water",
    Still => "still",
    TalkingOnCouch => "talking on couch",
    TalkingOnPhone => "talking on the phone",
    WearingContactLenses => "wearing contact lenses",
    WorkingOnComputer => "working on computer",
    WritingOnWhiteboard => "writing on whiteboard",
}

impl ActivityLabel {
    pub fn index(self) -> usize {
        self as usize
    }

    /// Letter used on confusion-matrix axes (A through N).
    pub fn letter(self) -> char {
        (b'A' + self as u8) as char
    }

    /// `random` and `still` are not target activities of any scene.
    pub fn is_extra(self) -> bool {
        matches!(self, ActivityLabel::Random | ActivityLabel::Still)
    }
}

impl fmt::Display for ActivityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivityLabel {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim();
        ActivityLabel::ALL
            .iter()
            .copied()
            .find(|l| l.name().eq_ignore_ascii_case(wanted))
            .ok_or_else(|| DatasetError::UnknownLabel(wanted.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scene {
    Bathroom,
    Bedroom,
    Kitchen,
    Livingroom,
    Office,
}

impl Scene {
    pub const ALL: [Scene; 5] = [
        Scene::Bathroom,
        Scene::Bedroom,
        Scene::Kitchen,
        Scene::Livingroom,
        Scene::Office,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scene::Bathroom => "bathroom",
            Scene::Bedroom => "bedroom",
            Scene::Kitchen => "kitchen",
            Scene::Livingroom => "livingroom",
            Scene::Office => "office",
        }
    }
}

impl fmt::Display for Scene {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scene {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted: String = s
            .trim()
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '_')
            .collect();
        Scene::ALL
            .iter()
            .copied()
            .find(|sc| sc.name().eq_ignore_ascii_case(&wanted))
            .ok_or_else(|| DatasetError::UnknownScene(s.trim().to_string()))
    }
}

const DEFAULT_SCENE_TABLE: &str = include_str!("../../data/scenes.txt");

/// Which activities belong to which scene.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SceneTable {
    scenes: BTreeMap<Scene, Vec<ActivityLabel>>,
}

impl SceneTable {
    /// Parses `scene: label, label, ...` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let mut scenes = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (scene, labels) = line
                .split_once(':')
                .ok_or_else(|| DatasetError::SceneTable(format!("line {}: missing ':'", n + 1)))?;
            let scene: Scene = scene.parse()?;
            let mut list = labels
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(ActivityLabel::from_str)
                .collect::<Result<Vec<_>, _>>()?;
            list.sort();
            list.dedup();
            if list.is_empty() {
                return Err(DatasetError::SceneTable(format!(
                    "scene '{scene}' lists no activities"
                )));
            }
            if scenes.insert(scene, list).is_some() {
                return Err(DatasetError::SceneTable(format!(
                    "scene '{scene}' listed twice"
                )));
            }
        }
        Ok(Self { scenes })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Target activities of `scene`, in canonical order.
    pub fn activities(&self, scene: Scene) -> &[ActivityLabel] {
        self.scenes.get(&scene).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Every scene that lists `label`.
    pub fn scenes_for(&self, label: ActivityLabel) -> Vec<Scene> {
        self.scenes
            .iter()
            .filter(|(_, labels)| labels.contains(&label))
            .map(|(scene, _)| *scene)
            .collect()
    }

    pub fn scenes(&self) -> impl Iterator<Item = Scene> + '_ {
        self.scenes.keys().copied()
    }
}

impl Default for SceneTable {
    fn default() -> Self {
        Self::parse(DEFAULT_SCENE_TABLE).expect("bundled scene table is valid")
    }
}

/// One activity performed by one subject.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionRecording {
    pub id: String,
    pub subject: SubjectId,
    /// Every scene the activity is assigned to; empty for `random`/`still`.
    pub scenes: Vec<Scene>,
    pub label: ActivityLabel,
    pub frame_rate: f64,
    pub frames: Vec<SkeletonFrame>,
}

impl ActionRecording {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Cad60Raw,
    Synthetic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub recordings: Vec<ActionRecording>,
    pub provenance: Provenance,
}

impl Corpus {
    pub fn new(recordings: Vec<ActionRecording>, provenance: Provenance) -> Self {
        Self {
            recordings,
            provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.recordings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recordings.is_empty()
    }

    pub fn frame_count(&self) -> usize {
        self.recordings.iter().map(ActionRecording::len).sum()
    }

    pub fn subjects(&self) -> BTreeSet<SubjectId> {
        self.recordings.iter().map(|r| r.subject).collect()
    }

    pub fn labels(&self) -> BTreeSet<ActivityLabel> {
        self.recordings.iter().map(|r| r.label).collect()
    }

    pub fn scenes(&self) -> BTreeSet<Scene> {
        self.recordings
            .iter()
            .flat_map(|r| r.scenes.iter().copied())
            .collect()
    }

    /// Recordings of one (subject, scene, label) triple.
    pub fn find(
        &self,
        subject: SubjectId,
        scene: Scene,
        label: ActivityLabel,
    ) -> impl Iterator<Item = &ActionRecording> {
        self.recordings
            .iter()
            .filter(move |r| r.subject == subject && r.label == label && r.scenes.contains(&scene))
    }

    fn filtered(&self, keep: impl Fn(&ActionRecording) -> bool) -> Corpus {
        Corpus {
            recordings: self.recordings.iter().filter(|r| keep(r)).cloned().collect(),
            provenance: self.provenance,
        }
    }

    /// Leave-one-subject-out partition.
    pub fn split_loso(&self, held_out: SubjectId) -> Result<LosoSplit, DatasetError> {
        if !self.recordings.iter().any(|r| r.subject == held_out) {
            return Err(DatasetError::UnknownSubject(held_out));
        }
        Ok(LosoSplit {
            held_out_subject: held_out,
            train: self.filtered(|r| r.subject != held_out),
            test: self.filtered(|r| r.subject == held_out),
        })
    }

    /// Recordings assigned to `scene`. With `include_extras`, the scene-less
    /// `random` and `still` recordings are kept as well.
    pub fn scene_subset(&self, scene: Scene, include_extras: bool) -> Corpus {
        self.filtered(|r| r.scenes.contains(&scene) || (include_extras && r.label.is_extra()))
    }

    /// Drops `random` and `still` recordings.
    pub fn without_extras(&self) -> Corpus {
        self.filtered(|r| !r.label.is_extra())
    }
}

/// Free-function form of [`Corpus::split_loso`].
pub fn split_loso(corpus: &Corpus, held_out: SubjectId) -> Result<LosoSplit, DatasetError> {
    corpus.split_loso(held_out)
}

/// Free-function form of [`Corpus::scene_subset`].
pub fn scene_subset(corpus: &Corpus, scene: Scene, include_extras: bool) -> Corpus {
    corpus.scene_subset(scene, include_extras)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LosoSplit {
    pub held_out_subject: SubjectId,
    pub train: Corpus,
    pub test: Corpus,
}
