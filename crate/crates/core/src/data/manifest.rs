//! Dataset manifests: line-delimited sequence records plus the subject
//! split.
//!
//! A manifest file holds one JSON record per line. The train/test split is a
//! rule applied at load time (first N distinct subjects, ascending), so the
//! same file supports any cut.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::sequence::Condition;

/// One sequence on disk.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    /// Sequence file path, relative to the manifest's directory.
    pub path: String,
    pub subject: String,
    pub condition: Condition,
    pub view_deg: u16,
    /// 1-based within (subject, condition).
    pub seq_index: u32,
}

impl ManifestRecord {
    /// Absolute path of the sequence file given the manifest location.
    pub fn resolve(&self, manifest_path: &Path) -> PathBuf {
        let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
        base.join(&self.path)
    }
}

/// Records partitioned by subject.
#[derive(Clone, Debug)]
pub struct DatasetManifest {
    pub train: Vec<ManifestRecord>,
    pub test: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn train_subjects(&self) -> BTreeSet<&str> {
        self.train.iter().map(|r| r.subject.as_str()).collect()
    }

    pub fn test_subjects(&self) -> BTreeSet<&str> {
        self.test.iter().map(|r| r.subject.as_str()).collect()
    }
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(|e| Error::Data(e.to_string()))?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: ManifestRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        records.push(r);
    }
    if records.is_empty() {
        return Err(Error::Data(format!("{}: empty manifest", path.display())));
    }
    Ok(records)
}

/// Splits records so the first `n` distinct subjects (ascending order) train
/// and the rest test. Subject sets are disjoint by construction; the split
/// is rejected if either side ends up empty.
pub fn split_first_n(records: &[ManifestRecord], n: usize) -> Result<DatasetManifest> {
    let subjects: BTreeSet<&str> = records.iter().map(|r| r.subject.as_str()).collect();
    if n == 0 || n >= subjects.len() {
        return Err(Error::Config(format!(
            "train split of {n} subjects needs 0 < n < {} total subjects",
            subjects.len()
        )));
    }
    let train_set: BTreeSet<&str> = subjects.iter().take(n).copied().collect();
    let (train, test) = records
        .iter()
        .cloned()
        .partition(|r| train_set.contains(r.subject.as_str()));
    let m = DatasetManifest { train, test };
    debug_assert!(m.train_subjects().is_disjoint(&m.test_subjects()));
    Ok(m)
}
