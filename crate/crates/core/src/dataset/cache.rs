//! JSON corpus cache: one document per recording.
//!
//! ```json
//! {"id": "...", "subject": 1, "scenes": ["bathroom"], "label": "brushing teeth",
//!  "frame_rate": 30.0, "provenance": "cad60_raw", "frame_indices": [1, 2],
//!  "frames": [[45 numbers], ...], "confidences": [[15 numbers], ...]}
//! ```
//!
//! `frame_indices`, `confidences` and `provenance` are optional on read
//! (defaults: 1-based consecutive indices, confidence 1, `cad60_raw`).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    ActionRecording, ActivityLabel, Corpus, DatasetError, Joint, Provenance, Scene, SkeletonFrame,
    SubjectId, JOINT_COUNT, POSE_DIM,
};

#[derive(Serialize, Deserialize)]
struct RecordingDoc {
    id: String,
    subject: SubjectId,
    scenes: Vec<Scene>,
    label: ActivityLabel,
    frame_rate: f64,
    #[serde(default = "default_provenance")]
    provenance: Provenance,
    #[serde(default)]
    frame_indices: Option<Vec<u32>>,
    frames: Vec<Vec<f64>>,
    #[serde(default)]
    confidences: Option<Vec<Vec<f64>>>,
}

fn default_provenance() -> Provenance {
    Provenance::Cad60Raw
}

pub fn recording_to_json(recording: &ActionRecording, provenance: Provenance) -> String {
    let doc = RecordingDoc {
        id: recording.id.clone(),
        subject: recording.subject,
        scenes: recording.scenes.clone(),
        label: recording.label,
        frame_rate: recording.frame_rate,
        provenance,
        frame_indices: Some(recording.frames.iter().map(|f| f.frame_index).collect()),
        frames: recording.frames.iter().map(SkeletonFrame::to_pose_values).collect(),
        confidences: Some(
            recording
                .frames
                .iter()
                .map(|f| f.joints.iter().map(|j| j.confidence).collect())
                .collect(),
        ),
    };
    serde_json::to_string(&doc).expect("recording serializes")
}

fn doc_to_recording(doc: RecordingDoc, path: &Path) -> Result<(ActionRecording, Provenance), DatasetError> {
    let bad = |message: String| DatasetError::InvalidValue { line: 0, message: format!("{}: {message}", path.display()) };
    if doc.frames.is_empty() {
        return Err(bad("recording has no frames".into()));
    }
    let indices = doc
        .frame_indices
        .unwrap_or_else(|| (1..=doc.frames.len() as u32).collect());
    if indices.len() != doc.frames.len() {
        return Err(bad("frame_indices length differs from frames".into()));
    }
    let mut frames = Vec::with_capacity(doc.frames.len());
    for (k, (values, index)) in doc.frames.iter().zip(&indices).enumerate() {
        if values.len() != POSE_DIM {
            return Err(bad(format!("frame {k} has {} values, expected {POSE_DIM}", values.len())));
        }
        let mut frame = SkeletonFrame::from_pose_values(*index, values).expect("length checked");
        if let Some(conf) = doc.confidences.as_ref().and_then(|c| c.get(k)) {
            if conf.len() != JOINT_COUNT {
                return Err(bad(format!("frame {k} has {} confidences", conf.len())));
            }
            for (joint, c) in frame.joints.iter_mut().zip(conf) {
                joint.confidence = *c;
            }
        }
        if !frame.joints.iter().all(Joint::is_valid) {
            return Err(bad(format!("frame {k} has invalid joint values")));
        }
        frames.push(frame);
    }
    Ok((
        ActionRecording {
            id: doc.id,
            subject: doc.subject,
            scenes: doc.scenes,
            label: doc.label,
            frame_rate: doc.frame_rate,
            frames,
        },
        doc.provenance,
    ))
}

pub fn read_recording_json(text: &str, path: &Path) -> Result<(ActionRecording, Provenance), DatasetError> {
    let doc: RecordingDoc = serde_json::from_str(text).map_err(|source| DatasetError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    doc_to_recording(doc, path)
}

/// Writes one `NNNNN.json` document per recording into `dir`.
pub fn write_corpus_cache(corpus: &Corpus, dir: &Path) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(|source| DatasetError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for (i, rec) in corpus.recordings.iter().enumerate() {
        let path = dir.join(format!("{i:05}.json"));
        fs::write(&path, recording_to_json(rec, corpus.provenance)).map_err(|source| {
            DatasetError::Io {
                path: path.clone(),
                source,
            }
        })?;
    }
    Ok(())
}

/// Reads every `*.json` file of `dir` in file-name order.
pub fn load_corpus_cache(dir: &Path) -> Result<Corpus, DatasetError> {
    let io = |source| DatasetError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();

    let mut recordings = Vec::with_capacity(paths.len());
    let mut provenance = Provenance::Cad60Raw;
    for path in paths {
        let text = fs::read_to_string(&path).map_err(|source| DatasetError::Io {
            path: path.clone(),
            source,
        })?;
        let (rec, prov) = read_recording_json(&text, &path)?;
        provenance = prov;
        recordings.push(rec);
    }
    if recordings.is_empty() {
        return Err(DatasetError::EmptyCorpus);
    }
    Ok(Corpus::new(recordings, provenance))
}
