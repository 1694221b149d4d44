//! Deterministic synthetic corpora with CAD-60 shape.
//!
//! Every class is a smooth joint-trajectory template (a static arm/leg
//! configuration plus per-joint sinusoids). Every subject applies a fixed
//! body scale, a global translation and additive Gaussian noise, so raw
//! coordinates differ strongly across subjects while centred poses stay
//! class-specific.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    ActionRecording, ActivityLabel, Corpus, DatasetError, Joint, JointId, Provenance, SceneTable,
    SkeletonFrame, SubjectId, FRAME_RATE_HZ, JOINT_COUNT, SUBJECT_IDS,
};

/// Label assignment for synthetic classes: the first `classes` entries are
/// used, so small corpora fall into a single scene (bathroom first).
pub const SYNTHETIC_LABEL_ORDER: [ActivityLabel; 14] = [
    ActivityLabel::BrushingTeeth,
    ActivityLabel::RinsingMouth,
    ActivityLabel::WearingContactLenses,
    ActivityLabel::CookingChopping,
    ActivityLabel::CookingStirring,
    ActivityLabel::OpeningPillContainer,
    ActivityLabel::DrinkingWater,
    ActivityLabel::TalkingOnPhone,
    ActivityLabel::TalkingOnCouch,
    ActivityLabel::RelaxingOnCouch,
    ActivityLabel::WritingOnWhiteboard,
    ActivityLabel::WorkingOnComputer,
    ActivityLabel::Random,
    ActivityLabel::Still,
];

const MIN_FRAMES: usize = 12;
const NOISE_MM: f64 = 12.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub subjects: usize,
    pub classes: usize,
    pub frames_per_recording: usize,
}

/// Standing skeleton, hip centre at the origin, millimetres.
fn base_pose() -> [[f64; 3]; JOINT_COUNT] {
    let mut p = [[0.0; 3]; JOINT_COUNT];
    let mut set = |j: JointId, v: [f64; 3]| p[j.index()] = v;
    set(JointId::Head, [0.0, 700.0, 0.0]);
    set(JointId::Neck, [0.0, 480.0, 0.0]);
    set(JointId::Torso, [0.0, 230.0, 0.0]);
    set(JointId::LeftShoulder, [-180.0, 440.0, 0.0]);
    set(JointId::RightShoulder, [180.0, 440.0, 0.0]);
    set(JointId::LeftElbow, [-220.0, 180.0, 0.0]);
    set(JointId::RightElbow, [220.0, 180.0, 0.0]);
    set(JointId::LeftHand, [-230.0, -60.0, 0.0]);
    set(JointId::RightHand, [230.0, -60.0, 0.0]);
    set(JointId::LeftHip, [-100.0, 0.0, 0.0]);
    set(JointId::RightHip, [100.0, 0.0, 0.0]);
    set(JointId::LeftKnee, [-110.0, -420.0, 0.0]);
    set(JointId::RightKnee, [110.0, -420.0, 0.0]);
    set(JointId::LeftFoot, [-110.0, -830.0, 0.0]);
    set(JointId::RightFoot, [110.0, -830.0, 0.0]);
    p
}

/// Typical displacement scale per joint: arms move most, hips are fixed so
/// the hip centre stays put.
fn mobility(j: JointId) -> f64 {
    use JointId::*;
    match j {
        LeftHand | RightHand => 260.0,
        LeftElbow | RightElbow => 150.0,
        Head => 60.0,
        Neck | LeftShoulder | RightShoulder => 30.0,
        Torso => 20.0,
        LeftKnee | RightKnee => 40.0,
        LeftFoot | RightFoot => 30.0,
        LeftHip | RightHip => 0.0,
    }
}

struct ClassTemplate {
    offset: [[f64; 3]; JOINT_COUNT],
    amplitude: [[f64; 3]; JOINT_COUNT],
    phase: [[f64; 3]; JOINT_COUNT],
    /// cycles per second
    frequency: f64,
}

impl ClassTemplate {
    fn sample(rng: &mut ChaCha8Rng) -> Self {
        let mut t = ClassTemplate {
            offset: [[0.0; 3]; JOINT_COUNT],
            amplitude: [[0.0; 3]; JOINT_COUNT],
            phase: [[0.0; 3]; JOINT_COUNT],
            frequency: rng.random_range(0.4..1.6),
        };
        for j in JointId::ALL {
            let m = mobility(j);
            for a in 0..3 {
                t.offset[j.index()][a] = rng.random_range(-m..=m);
                t.amplitude[j.index()][a] = rng.random_range(0.0..=0.3 * m);
                t.phase[j.index()][a] = rng.random_range(0.0..std::f64::consts::TAU);
            }
        }
        t
    }

    fn joint_at(&self, base: &[[f64; 3]; JOINT_COUNT], j: usize, a: usize, seconds: f64) -> f64 {
        base[j][a]
            + self.offset[j][a]
            + self.amplitude[j][a]
                * (std::f64::consts::TAU * self.frequency * seconds + self.phase[j][a]).sin()
    }
}

struct SubjectStyle {
    scale: f64,
    translation: [f64; 3],
}

/// Pure function of `spec`: equal specs give identical corpora.
pub fn generate_synthetic_corpus(spec: SyntheticSpec) -> Result<Corpus, DatasetError> {
    if !(2..=SUBJECT_IDS.len()).contains(&spec.subjects) {
        return Err(DatasetError::InvalidCount(format!(
            "subjects must be in 2..={}, got {}",
            SUBJECT_IDS.len(),
            spec.subjects
        )));
    }
    if !(2..=SYNTHETIC_LABEL_ORDER.len()).contains(&spec.classes) {
        return Err(DatasetError::InvalidCount(format!(
            "classes must be in 2..={}, got {}",
            SYNTHETIC_LABEL_ORDER.len(),
            spec.classes
        )));
    }
    if spec.frames_per_recording < MIN_FRAMES {
        return Err(DatasetError::InvalidCount(format!(
            "frames_per_recording must be >= {MIN_FRAMES}, got {}",
            spec.frames_per_recording
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let base = base_pose();
    let templates: Vec<ClassTemplate> = (0..spec.classes)
        .map(|_| ClassTemplate::sample(&mut rng))
        .collect();
    let styles: Vec<SubjectStyle> = (0..spec.subjects)
        .map(|_| SubjectStyle {
            scale: rng.random_range(0.85..1.15),
            translation: [
                rng.random_range(-600.0..600.0),
                rng.random_range(-300.0..300.0),
                rng.random_range(1800.0..3200.0),
            ],
        })
        .collect();
    let noise = Normal::new(0.0, NOISE_MM).expect("positive sigma");
    let scenes = SceneTable::default();

    let mut recordings = Vec::with_capacity(spec.subjects * spec.classes);
    for (s, style) in styles.iter().enumerate() {
        let subject = SUBJECT_IDS[s];
        for (c, template) in templates.iter().enumerate() {
            let label = SYNTHETIC_LABEL_ORDER[c];
            let start = rng.random_range(0.0..2.0);
            let frames = (0..spec.frames_per_recording)
                .map(|k| {
                    let seconds = start + k as f64 / FRAME_RATE_HZ;
                    let mut joints = [Joint::ORIGIN; JOINT_COUNT];
                    for (j, joint) in joints.iter_mut().enumerate() {
                        let mut xyz = [0.0; 3];
                        for (a, v) in xyz.iter_mut().enumerate() {
                            *v = style.scale * template.joint_at(&base, j, a, seconds)
                                + style.translation[a]
                                + noise.sample(&mut rng);
                        }
                        *joint = Joint::new(xyz[0], xyz[1], xyz[2]);
                    }
                    SkeletonFrame::new(k as u32 + 1, joints)
                })
                .collect();
            recordings.push(ActionRecording {
                id: format!("s{subject}c{c:02}"),
                subject: subject as SubjectId,
                scenes: scenes.scenes_for(label),
                label,
                frame_rate: FRAME_RATE_HZ,
                frames,
            });
        }
    }
    Ok(Corpus::new(recordings, Provenance::Synthetic))
}
