//! Skeleton sequence types and keypoint file I/O.
//!
//! Keypoints use the 17-joint COCO ordering throughout. Two on-disk formats
//! are supported: a self-describing JSON object per sequence, and a bare CSV
//! with 34 columns per frame (x0,y0,...,x16,y16) whose metadata comes from
//! the filename `{subject}-{condition}-{seq}-{view}.csv`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Tensor;

pub const JOINT_COUNT: usize = 17;

/// COCO keypoint ordering.
pub const JOINT_NAMES: [&str; JOINT_COUNT] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

/// Left/right joint swap for horizontal mirroring: `LR_SWAP[j]` is the joint
/// that takes joint j's place. An involution.
pub const LR_SWAP: [usize; JOINT_COUNT] = [0, 2, 1, 4, 3, 6, 5, 8, 7, 10, 9, 12, 11, 14, 13, 16, 15];

/// Walking condition, following the CASIA-B naming.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    #[serde(rename = "NM")]
    Nm,
    #[serde(rename = "BG")]
    Bg,
    #[serde(rename = "CL")]
    Cl,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Nm, Condition::Bg, Condition::Cl];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Nm => "NM",
            Condition::Bg => "BG",
            Condition::Cl => "CL",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "NM" => Ok(Condition::Nm),
            "BG" => Ok(Condition::Bg),
            "CL" => Ok(Condition::Cl),
            other => Err(Error::Data(format!("unknown condition '{other}'"))),
        }
    }
}

/// A full tracked sequence in pixel (or normalized) coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonSequence {
    /// Flat `[T * 17 * 2]` buffer, frame-major, (x, y) per joint.
    keypoints: Vec<f64>,
    frames: usize,
    pub subject: String,
    pub condition: Condition,
    pub view_deg: u16,
    /// 1-based index within (subject, condition).
    pub seq_index: u32,
}

impl SkeletonSequence {
    pub fn new(
        keypoints: Vec<f64>,
        subject: String,
        condition: Condition,
        view_deg: u16,
        seq_index: u32,
    ) -> Result<Self> {
        let per_frame = JOINT_COUNT * 2;
        if keypoints.is_empty() || keypoints.len() % per_frame != 0 {
            return Err(Error::Data(format!(
                "keypoint buffer of {} values is not a positive multiple of {per_frame}",
                keypoints.len()
            )));
        }
        if let Some(pos) = keypoints.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite keypoint at flat index {pos} (subject {subject})"
            )));
        }
        let frames = keypoints.len() / per_frame;
        Ok(Self {
            keypoints,
            frames,
            subject,
            condition,
            view_deg,
            seq_index,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn keypoints(&self) -> &[f64] {
        &self.keypoints
    }

    /// (x, y) of joint `j` at frame `t`.
    pub fn at(&self, t: usize, j: usize) -> (f64, f64) {
        let base = (t * JOINT_COUNT + j) * 2;
        (self.keypoints[base], self.keypoints[base + 1])
    }

    /// Divides every coordinate by `width`. One shared divisor for x and y
    /// keeps the aspect ratio.
    pub fn normalize(&self, width: f64) -> Result<SkeletonSequence> {
        if width <= 0.0 {
            return Err(Error::Config(format!("normalize width {width} must be positive")));
        }
        let mut out = self.clone();
        for v in &mut out.keypoints {
            *v /= width;
        }
        Ok(out)
    }

    /// Contiguous `frames`-long window starting at `start`.
    pub fn crop(&self, start: usize, frames: usize) -> Result<GaitSample> {
        if start + frames > self.frames {
            return Err(Error::Data(format!(
                "crop [{start}, {}) exceeds {} frames (subject {}, {} #{})",
                start + frames,
                self.frames,
                self.subject,
                self.condition,
                self.seq_index
            )));
        }
        let per_frame = JOINT_COUNT * 2;
        let window = self.keypoints[start * per_frame..(start + frames) * per_frame].to_vec();
        GaitSample::new(
            window,
            frames,
            self.subject.clone(),
            self.condition,
            self.view_deg,
            self.seq_index,
        )
    }

    /// The middle `frames`-long window: start = floor((T - frames) / 2).
    /// Sequences shorter than `frames` are rejected, not padded.
    pub fn center_crop(&self, frames: usize) -> Result<GaitSample> {
        if self.frames < frames {
            return Err(Error::Data(format!(
                "sequence of {} frames is shorter than the {frames}-frame window \
                 (subject {}, {} #{})",
                self.frames, self.subject, self.condition, self.seq_index
            )));
        }
        self.crop((self.frames - frames) / 2, frames)
    }
}

/// A fixed-length normalized window ready for the model.
#[derive(Clone, Debug, PartialEq)]
pub struct GaitSample {
    /// Flat `[frames * 17 * 2]`, same layout as [`SkeletonSequence`].
    window: Vec<f64>,
    frames: usize,
    pub subject: String,
    pub condition: Condition,
    pub view_deg: u16,
    pub seq_index: u32,
}

/// Sanity band for normalized coordinates; values outside indicate a missing
/// normalize step or corrupted data.
pub const COORD_BAND: f64 = 2.0;

impl GaitSample {
    pub fn new(
        window: Vec<f64>,
        frames: usize,
        subject: String,
        condition: Condition,
        view_deg: u16,
        seq_index: u32,
    ) -> Result<Self> {
        if window.len() != frames * JOINT_COUNT * 2 {
            return Err(Error::Data(format!(
                "window of {} values does not match {frames} frames x {JOINT_COUNT} joints x 2",
                window.len()
            )));
        }
        if let Some(v) = window.iter().find(|v| !v.is_finite() || v.abs() > COORD_BAND) {
            return Err(Error::Data(format!(
                "window coordinate {v} outside the +-{COORD_BAND} normalized band \
                 (subject {subject}); was the sequence normalized?"
            )));
        }
        Ok(Self {
            window,
            frames,
            subject,
            condition,
            view_deg,
            seq_index,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub(crate) fn window_mut(&mut self) -> &mut [f64] {
        &mut self.window
    }

    pub fn at(&self, t: usize, j: usize) -> (f64, f64) {
        let base = (t * JOINT_COUNT + j) * 2;
        (self.window[base], self.window[base + 1])
    }

    /// `[frames, 17, 2]` tensor view of the window.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.frames, JOINT_COUNT, 2], self.window.clone())
            .expect("window length is validated at construction")
    }
}

/// Serialized form of one sequence file.
#[derive(Serialize, Deserialize)]
struct SequenceFile {
    subject: String,
    condition: Condition,
    view: u16,
    #[serde(default = "default_seq_index")]
    seq_index: u32,
    /// One row per frame, 34 values: x0,y0,...,x16,y16.
    frames: Vec<Vec<f64>>,
}

fn default_seq_index() -> u32 {
    1
}

/// Loads a sequence from `path`. `.json` files are self-describing; `.csv`
/// files carry 34 columns per row and take their metadata from a
/// `{subject}-{condition}-{seq}-{view}` filename.
pub fn load_sequence(path: &Path) -> Result<SkeletonSequence> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => load_json(path),
        Some("csv") => load_csv(path),
        other => Err(Error::Data(format!(
            "unsupported sequence extension {other:?} for {}",
            path.display()
        ))),
    }
}

fn load_json(path: &Path) -> Result<SkeletonSequence> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: SequenceFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    let mut keypoints = Vec::with_capacity(file.frames.len() * JOINT_COUNT * 2);
    for (i, row) in file.frames.iter().enumerate() {
        check_row(path, i + 1, row)?;
        keypoints.extend_from_slice(row);
    }
    SkeletonSequence::new(keypoints, file.subject, file.condition, file.view, file.seq_index)
}

fn load_csv(path: &Path) -> Result<SkeletonSequence> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Data(format!("{}: no file stem", path.display())))?;
    let parts: Vec<&str> = stem.split('-').collect();
    if parts.len() != 4 {
        return Err(Error::Data(format!(
            "{}: csv filename must be subject-condition-seq-view, got '{stem}'",
            path.display()
        )));
    }
    let condition: Condition = parts[1].parse()?;
    let seq_index: u32 = parts[2]
        .parse()
        .map_err(|_| Error::Data(format!("{}: bad seq index '{}'", path.display(), parts[2])))?;
    let view_deg: u16 = parts[3]
        .parse()
        .map_err(|_| Error::Data(format!("{}: bad view '{}'", path.display(), parts[3])))?;

    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut keypoints = Vec::new();
    let mut rows = 0usize;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::with_capacity(JOINT_COUNT * 2);
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg: format!("'{}' is not a number", field.trim()),
            })?;
            row.push(v);
        }
        check_row(path, i + 1, &row)?;
        keypoints.extend_from_slice(&row);
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Data(format!("{}: no frames", path.display())));
    }
    SkeletonSequence::new(keypoints, parts[0].to_string(), condition, view_deg, seq_index)
}

fn check_row(path: &Path, line: usize, row: &[f64]) -> Result<()> {
    if row.len() != JOINT_COUNT * 2 {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line,
            msg: format!(
                "{} values per frame, expected {} ({} joints)",
                row.len(),
                JOINT_COUNT * 2,
                JOINT_COUNT
            ),
        });
    }
    if let Some(v) = row.iter().find(|v| !v.is_finite()) {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line,
            msg: format!("non-finite value {v}"),
        });
    }
    Ok(())
}

/// Writes a sequence file; format follows the path extension.
pub fn write_sequence(path: &Path, seq: &SkeletonSequence) -> Result<()> {
    let per_frame = JOINT_COUNT * 2;
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => {
            let file = SequenceFile {
                subject: seq.subject.clone(),
                condition: seq.condition,
                view: seq.view_deg,
                seq_index: seq.seq_index,
                frames: seq
                    .keypoints
                    .chunks(per_frame)
                    .map(|c| c.to_vec())
                    .collect(),
            };
            let text = serde_json::to_string(&file).map_err(|e| Error::Data(e.to_string()))?;
            std::fs::write(path, text).map_err(|e| Error::io(path, e))
        }
        Some("csv") => {
            let mut out = String::new();
            for chunk in seq.keypoints.chunks(per_frame) {
                let row: Vec<String> = chunk.iter().map(|v| format!("{v:?}")).collect();
                out.push_str(&row.join(","));
                out.push('\n');
            }
            std::fs::write(path, out).map_err(|e| Error::io(path, e))
        }
        other => Err(Error::Data(format!(
            "unsupported sequence extension {other:?} for {}",
            path.display()
        ))),
    }
}
