//! Skeleton data: domain types, file formats, augmentation, batch sampling,
//! and the synthetic gait generator.

mod augment;
mod manifest;
mod sampler;
mod sequence;
mod synth;

pub use augment::{augment, mirror_in_place, AugmentPolicy};
pub use manifest::{read_manifest, split_first_n, write_manifest, DatasetManifest, ManifestRecord};
pub use sampler::BatchSampler;
pub use sequence::{
    load_sequence, write_sequence, Condition, GaitSample, SkeletonSequence, COORD_BAND,
    JOINT_COUNT, JOINT_NAMES, LR_SWAP,
};
pub use synth::{
    generate_dataset, render_sequence, sample_latents, write_dataset, SubjectLatent, SynthSpec,
    VIEW_ANGLES,
};

use std::path::Path;

use crate::error::Result;

/// Sequences loaded into memory, normalized, aligned with their records.
pub struct Dataset {
    pub records: Vec<ManifestRecord>,
    pub sequences: Vec<SkeletonSequence>,
}

impl Dataset {
    /// Loads every sequence a manifest lists and normalizes coordinates by
    /// `width`.
    pub fn load(manifest_path: &Path, width: f64) -> Result<Self> {
        let records = read_manifest(manifest_path)?;
        let mut sequences = Vec::with_capacity(records.len());
        for r in &records {
            let seq = load_sequence(&r.resolve(manifest_path))?;
            sequences.push(seq.normalize(width)?);
        }
        Ok(Self { records, sequences })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}
