//! Pose preconditioning, velocities and sliding windows.

use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    ActivityLabel, Corpus, Joint, JointId, SkeletonFrame, SubjectId, JOINT_COUNT, POSE_DIM,
};
use crate::linalg;

/// Neck-torso distances below this (millimetres) make a frame degenerate.
pub const DEGENERATE_EPS: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum PreconditionError {
    #[error("frame {frame_index}: neck-torso distance {distance} too small to normalise")]
    DegenerateSkeleton { frame_index: u32, distance: f64 },
    #[error("unknown preconditioning mode '{0}'")]
    UnknownMode(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreconditionMode {
    None,
    CentreMirror,
    CentreMirrorNormalize,
}

impl PreconditionMode {
    pub const ALL: [PreconditionMode; 3] = [
        PreconditionMode::None,
        PreconditionMode::CentreMirror,
        PreconditionMode::CentreMirrorNormalize,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PreconditionMode::None => "none",
            PreconditionMode::CentreMirror => "centre_mirror",
            PreconditionMode::CentreMirrorNormalize => "centre_mirror_normalize",
        }
    }

    /// Row caption used in the accuracy grid.
    pub fn caption(self) -> &'static str {
        match self {
            PreconditionMode::None => "No preconditioning",
            PreconditionMode::CentreMirror => "Centring and mirroring",
            PreconditionMode::CentreMirrorNormalize => "Centring, mirroring and normalizing",
        }
    }
}

impl fmt::Display for PreconditionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PreconditionMode {
    type Err = PreconditionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        PreconditionMode::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| PreconditionError::UnknownMode(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Train,
    Test,
}

/// A flattened skeleton pose (45 values, joint-major).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseVector {
    pub values: Vec<f64>,
    pub frame_index: u32,
}

impl AsRef<[f64]> for PoseVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

impl From<&SkeletonFrame> for PoseVector {
    fn from(frame: &SkeletonFrame) -> Self {
        PoseVector {
            values: frame.to_pose_values(),
            frame_index: frame.frame_index,
        }
    }
}

/// First difference of two consecutive poses, millimetres per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityVector {
    pub values: Vec<f64>,
    /// Index of the later frame.
    pub frame_index: u32,
}

impl AsRef<[f64]> for VelocityVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowVector {
    pub values: Vec<f64>,
    /// Position of the first source vector in the input list.
    pub start: usize,
}

impl AsRef<[f64]> for WindowVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// Midpoint of the two hip joints.
pub fn hip_centre(frame: &SkeletonFrame) -> [f64; 3] {
    let l = frame.joint(JointId::LeftHip);
    let r = frame.joint(JointId::RightHip);
    [
        0.5 * (l.x + r.x),
        0.5 * (l.y + r.y),
        0.5 * (l.z + r.z),
    ]
}

pub fn centre_on_hips(frame: &SkeletonFrame) -> SkeletonFrame {
    let [cx, cy, cz] = hip_centre(frame);
    let mut out = frame.clone();
    for j in out.joints.iter_mut() {
        j.x -= cx;
        j.y -= cy;
        j.z -= cz;
    }
    out
}

/// Negates x and swaps every left joint with its right counterpart.
pub fn mirror_x(frame: &SkeletonFrame) -> SkeletonFrame {
    let mut joints = [Joint::ORIGIN; JOINT_COUNT];
    for id in JointId::ALL {
        let src = frame.joint(id);
        joints[id.contralateral().index()] = Joint { x: -src.x, ..*src };
    }
    SkeletonFrame::new(frame.frame_index, joints)
}

pub fn neck_torso_distance(frame: &SkeletonFrame) -> f64 {
    linalg::distance(
        &frame.joint(JointId::Neck).position(),
        &frame.joint(JointId::Torso).position(),
    )
}

/// Scales the frame so that the neck-torso distance becomes 1.
pub fn normalize_neck_torso(frame: &SkeletonFrame) -> Result<SkeletonFrame, PreconditionError> {
    let d = neck_torso_distance(frame);
    if !(d >= DEGENERATE_EPS) {
        return Err(PreconditionError::DegenerateSkeleton {
            frame_index: frame.frame_index,
            distance: d,
        });
    }
    let mut out = frame.clone();
    for j in out.joints.iter_mut() {
        j.x /= d;
        j.y /= d;
        j.z /= d;
    }
    Ok(out)
}

/// Poses of one recording (or of its mirrored copy) after preconditioning.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseSequence {
    /// Index of the source recording in the corpus.
    pub recording: usize,
    pub mirrored: bool,
    pub label: ActivityLabel,
    pub subject: SubjectId,
    pub poses: Vec<PoseVector>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PreconditionedSet {
    pub sequences: Vec<PoseSequence>,
    /// Frames removed as degenerate during normalisation.
    pub dropped_frames: usize,
}

impl PreconditionedSet {
    pub fn pose_count(&self) -> usize {
        self.sequences.iter().map(|s| s.poses.len()).sum()
    }

    /// Flat view: `(pose, label, subject, recording index)`.
    pub fn iter_vectors(
        &self,
    ) -> impl Iterator<Item = (&PoseVector, ActivityLabel, SubjectId, usize)> + '_ {
        self.sequences.iter().flat_map(|s| {
            s.poses
                .iter()
                .map(move |p| (p, s.label, s.subject, s.recording))
        })
    }
}

/// Applies `mode` to every recording. Training sets under the centring modes
/// are followed by their mirrored copy; test sets are never mirrored.
/// Degenerate frames are dropped (and counted) rather than failing the run.
pub fn apply_preconditioning(corpus: &Corpus, mode: PreconditionMode, role: Role) -> PreconditionedSet {
    let mut set = PreconditionedSet::default();
    for (idx, rec) in corpus.recordings.iter().enumerate() {
        let mut frames = Vec::with_capacity(rec.frames.len());
        for frame in &rec.frames {
            let f = match mode {
                PreconditionMode::None => frame.clone(),
                PreconditionMode::CentreMirror => centre_on_hips(frame),
                PreconditionMode::CentreMirrorNormalize => {
                    match normalize_neck_torso(&centre_on_hips(frame)) {
                        Ok(f) => f,
                        Err(e) => {
                            warn!("recording {}: {e}; frame dropped", rec.id);
                            set.dropped_frames += 1;
                            continue;
                        }
                    }
                }
            };
            frames.push(f);
        }
        set.sequences.push(PoseSequence {
            recording: idx,
            mirrored: false,
            label: rec.label,
            subject: rec.subject,
            poses: frames.iter().map(PoseVector::from).collect(),
        });
    }

    if role == Role::Train && mode != PreconditionMode::None {
        let mirrored: Vec<PoseSequence> = set
            .sequences
            .iter()
            .map(|s| PoseSequence {
                mirrored: true,
                poses: s
                    .poses
                    .iter()
                    .map(|p| PoseVector {
                        values: mirror_pose_values(&p.values),
                        frame_index: p.frame_index,
                    })
                    .collect(),
                ..s.clone()
            })
            .collect();
        set.sequences.extend(mirrored);
    }
    set
}

/// [`mirror_x`] on a flattened 45-value pose.
pub fn mirror_pose_values(values: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), POSE_DIM);
    let mut out = vec![0.0; POSE_DIM];
    for id in JointId::ALL {
        let s = 3 * id.index();
        let d = 3 * id.contralateral().index();
        out[d] = -values[s];
        out[d + 1] = values[s + 1];
        out[d + 2] = values[s + 2];
    }
    out
}

/// `v(k) = p(k) - p(k-1)`; empty when fewer than two poses.
pub fn compute_velocities(poses: &[PoseVector]) -> Vec<VelocityVector> {
    poses
        .windows(2)
        .map(|pair| VelocityVector {
            values: pair[1]
                .values
                .iter()
                .zip(&pair[0].values)
                .map(|(b, a)| b - a)
                .collect(),
            frame_index: pair[1].frame_index,
        })
        .collect()
}

/// Stride-1 windows of `w` consecutive vectors, concatenated.
pub fn sliding_windows<V: AsRef<[f64]>>(vectors: &[V], w: usize) -> Vec<WindowVector> {
    dilated_windows(vectors, w, 1)
}

/// Stride-1 windows whose `w` elements are `dilation` positions apart:
/// element `i` is `concat(v[i], v[i + d], ..., v[i + (w-1)d])`.
pub fn dilated_windows<V: AsRef<[f64]>>(vectors: &[V], w: usize, dilation: usize) -> Vec<WindowVector> {
    assert!(w >= 1, "window size must be at least 1");
    assert!(dilation >= 1, "dilation must be at least 1");
    let span = (w - 1) * dilation + 1;
    if vectors.len() < span {
        return Vec::new();
    }
    (0..=vectors.len() - span)
        .map(|start| WindowVector {
            values: (0..w)
                .flat_map(|k| vectors[start + k * dilation].as_ref().iter().copied())
                .collect(),
            start,
        })
        .collect()
}
