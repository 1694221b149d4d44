//! CAD-60 raw skeleton files and directory layout.
//!
//! A skeleton line is `frame_id,` followed by 11 joints encoded as
//! `9 orientation values, orientation confidence, x, y, z, position
//! confidence` and 4 joints (hands and feet) encoded as `x, y, z, position
//! confidence`. Lines end with a trailing comma and the file ends with a
//! literal `END` line. Orientations are discarded on read.
//!
//! A corpus root holds one folder per subject whose name ends in the subject
//! number (`data1` .. `data4`), each with `activityLabel.txt` (`id,label,`
//! lines) and one `<id>.txt` skeleton file per recording.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;

use super::{
    ActionRecording, ActivityLabel, Corpus, DatasetError, Joint, Provenance, SceneTable,
    SkeletonFrame, SubjectId, FRAME_RATE_HZ, JOINT_COUNT, SUBJECT_IDS,
};

pub const CAD60_TERMINATOR: &str = "END";
pub const CAD60_LABEL_FILE: &str = "activityLabel.txt";

const ORIENTED_JOINTS: usize = 11;
const ORIENTED_WIDTH: usize = 14;
const PLAIN_WIDTH: usize = 4;
/// Frame id plus all joint fields.
pub const CAD60_TOKENS_PER_LINE: usize =
    1 + ORIENTED_JOINTS * ORIENTED_WIDTH + (JOINT_COUNT - ORIENTED_JOINTS) * PLAIN_WIDTH;

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedSkeleton {
    pub frames: Vec<SkeletonFrame>,
    /// The file ended without an `END` line; frames read so far are kept.
    pub missing_terminator: bool,
}

/// Parses one CAD-60 skeleton file.
pub fn parse_cad60_skeleton_file(text: &str) -> Result<ParsedSkeleton, DatasetError> {
    let mut frames: Vec<SkeletonFrame> = Vec::new();
    let mut terminated = false;

    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line == CAD60_TERMINATOR {
            terminated = true;
            break;
        }
        let mut tokens: Vec<&str> = line.split(',').map(str::trim).collect();
        if tokens.last() == Some(&"") {
            tokens.pop();
        }
        if tokens.len() != CAD60_TOKENS_PER_LINE {
            return Err(DatasetError::MalformedLine {
                line: line_no,
                expected: CAD60_TOKENS_PER_LINE,
                found: tokens.len(),
            });
        }

        let frame_index: u32 = tokens[0].parse().map_err(|_| DatasetError::InvalidValue {
            line: line_no,
            message: format!("bad frame id '{}'", tokens[0]),
        })?;
        if let Some(prev) = frames.last() {
            if frame_index <= prev.frame_index {
                return Err(DatasetError::InvalidValue {
                    line: line_no,
                    message: format!(
                        "frame id {frame_index} does not follow {}",
                        prev.frame_index
                    ),
                });
            }
        }

        let number = |i: usize| -> Result<f64, DatasetError> {
            tokens[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| DatasetError::InvalidValue {
                    line: line_no,
                    message: format!("bad number '{}' in field {i}", tokens[i]),
                })
        };

        let mut joints = [Joint::ORIGIN; JOINT_COUNT];
        for (j, joint) in joints.iter_mut().enumerate() {
            // offset of the x field of joint j
            let base = if j < ORIENTED_JOINTS {
                1 + j * ORIENTED_WIDTH + 10
            } else {
                1 + ORIENTED_JOINTS * ORIENTED_WIDTH + (j - ORIENTED_JOINTS) * PLAIN_WIDTH
            };
            *joint = Joint {
                x: number(base)?,
                y: number(base + 1)?,
                z: number(base + 2)?,
                confidence: number(base + 3)?,
            };
            if !joint.is_valid() {
                return Err(DatasetError::InvalidValue {
                    line: line_no,
                    message: format!("joint {j} confidence {} outside [0,1]", joint.confidence),
                });
            }
        }
        frames.push(SkeletonFrame::new(frame_index, joints));
    }

    Ok(ParsedSkeleton {
        frames,
        missing_terminator: !terminated,
    })
}

/// Writes frames in the CAD-60 line layout. Orientations are written as the
/// identity rotation with confidence 1.
pub fn write_cad60_skeleton_file(frames: &[SkeletonFrame]) -> String {
    let mut out = String::new();
    for frame in frames {
        write!(out, "{},", frame.frame_index).unwrap();
        for (j, joint) in frame.joints.iter().enumerate() {
            if j < ORIENTED_JOINTS {
                out.push_str("1,0,0,0,1,0,0,0,1,1,");
            }
            write!(
                out,
                "{},{},{},{},",
                joint.x, joint.y, joint.z, joint.confidence
            )
            .unwrap();
        }
        out.push('\n');
    }
    out.push_str(CAD60_TERMINATOR);
    out.push('\n');
    out
}

#[derive(Clone, Debug)]
pub struct LoadedCorpus {
    pub corpus: Corpus,
    /// Non-fatal problems: skipped recordings, missing subjects, files
    /// without terminator.
    pub warnings: Vec<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Subject number encoded as the trailing digits of a folder name.
fn subject_from_dir_name(name: &str) -> Option<SubjectId> {
    let digits: String = name
        .chars()
        .rev()
        .take_while(char::is_ascii_digit)
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    let id: SubjectId = digits.parse().ok()?;
    SUBJECT_IDS.contains(&id).then_some(id)
}

fn parse_label_index(text: &str) -> Vec<(String, String)> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && *l != CAD60_TERMINATOR)
        .filter_map(|l| {
            let mut parts = l.split(',').map(str::trim);
            let id = parts.next()?.to_string();
            let label = parts.next()?.to_string();
            Some((id, label))
        })
        .collect()
}

struct PendingRecording {
    subject: SubjectId,
    id: String,
    label: ActivityLabel,
    path: PathBuf,
}

/// Loads a CAD-60 directory tree. Each recording is tagged with every scene
/// `scenes` assigns its activity to.
pub fn load_corpus(root: &Path, scenes: &SceneTable) -> Result<LoadedCorpus, DatasetError> {
    let mut warnings = Vec::new();
    let mut subject_dirs: Vec<(SubjectId, PathBuf)> = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err(root))? {
        let entry = entry.map_err(io_err(root))?;
        let path = entry.path();
        if !path.is_dir() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(subject) = subject_from_dir_name(&name) {
            subject_dirs.push((subject, path));
        }
    }
    subject_dirs.sort();

    let mut pending = Vec::new();
    for (subject, dir) in &subject_dirs {
        let index_path = dir.join(CAD60_LABEL_FILE);
        let index = match fs::read_to_string(&index_path) {
            Ok(text) => text,
            Err(e) => {
                warnings.push(format!("{}: {e}; subject skipped", index_path.display()));
                continue;
            }
        };
        for (id, label_text) in parse_label_index(&index) {
            match label_text.parse::<ActivityLabel>() {
                Ok(label) => pending.push(PendingRecording {
                    subject: *subject,
                    path: dir.join(format!("{id}.txt")),
                    id,
                    label,
                }),
                Err(e) => warnings.push(format!(
                    "subject {subject}, recording {id}: {e}; recording rejected"
                )),
            }
        }
    }

    let parsed: Vec<Result<(ActionRecording, Option<String>), String>> = pending
        .par_iter()
        .map(|p| {
            let text = fs::read_to_string(&p.path).map_err(|e| format!("{}: {e}", p.path.display()))?;
            let parsed = parse_cad60_skeleton_file(&text)
                .map_err(|e| format!("{}: {e}; recording rejected", p.path.display()))?;
            if parsed.frames.is_empty() {
                return Err(format!("{}: no frames; recording rejected", p.path.display()));
            }
            let note = parsed
                .missing_terminator
                .then(|| format!("{}: missing {CAD60_TERMINATOR} line", p.path.display()));
            Ok((
                ActionRecording {
                    id: p.id.clone(),
                    subject: p.subject,
                    scenes: scenes.scenes_for(p.label),
                    label: p.label,
                    frame_rate: FRAME_RATE_HZ,
                    frames: parsed.frames,
                },
                note,
            ))
        })
        .collect();

    let mut recordings = Vec::with_capacity(parsed.len());
    for item in parsed {
        match item {
            Ok((rec, note)) => {
                warnings.extend(note);
                recordings.push(rec);
            }
            Err(w) => warnings.push(w),
        }
    }

    if recordings.is_empty() {
        return Err(DatasetError::EmptyCorpus);
    }
    let corpus = Corpus::new(recordings, Provenance::Cad60Raw);
    let present = corpus.subjects();
    for s in SUBJECT_IDS {
        if !present.contains(&s) {
            warnings.push(format!("subject {s} missing from {}", root.display()));
        }
    }
    for w in &warnings {
        warn!("{w}");
    }
    Ok(LoadedCorpus { corpus, warnings })
}

/// Writes `corpus` as a CAD-60 directory tree readable by [`load_corpus`].
pub fn write_cad60_corpus(corpus: &Corpus, root: &Path) -> Result<(), DatasetError> {
    for subject in corpus.subjects() {
        let dir = root.join(format!("data{subject}"));
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let mut index = String::new();
        for rec in corpus.recordings.iter().filter(|r| r.subject == subject) {
            writeln!(index, "{},{},", rec.id, rec.label.name()).unwrap();
            let path = dir.join(format!("{}.txt", rec.id));
            fs::write(&path, write_cad60_skeleton_file(&rec.frames)).map_err(io_err(&path))?;
        }
        index.push_str(CAD60_TERMINATOR);
        index.push('\n');
        let path = dir.join(CAD60_LABEL_FILE);
        fs::write(&path, index).map_err(io_err(&path))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_line(frame: u32) -> String {
        let mut s = format!("{frame},");
        for _ in 0..(CAD60_TOKENS_PER_LINE - 1) {
            s.push_str("0,");
        }
        s
    }

    #[test]
    fn token_count_matches_layout() {
        assert_eq!(CAD60_TOKENS_PER_LINE, 171);
    }

    #[test]
    fn zero_line_parses_to_origin_joints() {
        let text = format!("{}\nEND\n", zero_line(1));
        let parsed = parse_cad60_skeleton_file(&text).unwrap();
        assert_eq!(parsed.frames.len(), 1);
        assert_eq!(parsed.frames[0].frame_index, 1);
        assert!(parsed.frames[0]
            .joints
            .iter()
            .all(|j| j.position() == [0.0, 0.0, 0.0]));
        assert!(!parsed.missing_terminator);
    }

    #[test]
    fn three_lines_plus_terminator() {
        let text = format!("{}\n{}\n{}\nEND\n", zero_line(1), zero_line(2), zero_line(3));
        let parsed = parse_cad60_skeleton_file(&text).unwrap();
        let idx: Vec<_> = parsed.frames.iter().map(|f| f.frame_index).collect();
        assert_eq!(idx, vec![1, 2, 3]);
    }

    #[test]
    fn positions_come_from_the_right_fields() {
        let frame = {
            let mut joints = [Joint::ORIGIN; JOINT_COUNT];
            for (j, joint) in joints.iter_mut().enumerate() {
                *joint = Joint {
                    x: j as f64 + 0.25,
                    y: -(j as f64),
                    z: 1000.0 + j as f64,
                    confidence: if j % 2 == 0 { 1.0 } else { 0.0 },
                };
            }
            SkeletonFrame::new(5, joints)
        };
        let text = write_cad60_skeleton_file(std::slice::from_ref(&frame));
        let parsed = parse_cad60_skeleton_file(&text).unwrap();
        assert_eq!(parsed.frames, vec![frame]);
    }

    #[test]
    fn wrong_token_count_rejects_file() {
        let mut line = zero_line(1);
        line.push_str("7,");
        let err = parse_cad60_skeleton_file(&format!("{line}\nEND\n")).unwrap_err();
        assert!(matches!(
            err,
            DatasetError::MalformedLine {
                line: 1,
                expected: 171,
                found: 172
            }
        ));
    }

    #[test]
    fn missing_terminator_keeps_frames() {
        let text = format!("{}\n{}\n", zero_line(1), zero_line(2));
        let parsed = parse_cad60_skeleton_file(&text).unwrap();
        assert_eq!(parsed.frames.len(), 2);
        assert!(parsed.missing_terminator);
    }

    #[test]
    fn non_increasing_frame_ids_are_rejected() {
        let text = format!("{}\n{}\nEND\n", zero_line(2), zero_line(2));
        assert!(matches!(
            parse_cad60_skeleton_file(&text),
            Err(DatasetError::InvalidValue { line: 2, .. })
        ));
    }

    #[test]
    fn subject_folder_names() {
        assert_eq!(subject_from_dir_name("data1"), Some(1));
        assert_eq!(subject_from_dir_name("Subject4"), Some(4));
        assert_eq!(subject_from_dir_name("data5"), None);
        assert_eq!(subject_from_dir_name("images"), None);
    }

    #[test]
    fn label_index_lines() {
        let idx = parse_label_index("0512164529,rinsing mouth with water,\n0512165243,still,\nEND\n");
        assert_eq!(
            idx,
            vec![
                ("0512164529".into(), "rinsing mouth with water".into()),
                ("0512165243".into(), "still".into())
            ]
        );
    }
}
