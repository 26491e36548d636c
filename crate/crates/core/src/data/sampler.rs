//! Balanced P x K batch sampling for metric learning.
//!
//! Each batch holds `p` distinct subjects with `k` samples each. Subjects are
//! drawn without replacement within an epoch (a fresh shuffled order per
//! epoch, cut into chunks of `p`; a trailing chunk smaller than `p` is
//! dropped). Batches are addressed by global step, so a resumed run sees
//! exactly the batches it would have seen uninterrupted.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::seeds;

use super::manifest::ManifestRecord;

#[derive(Clone, Debug)]
pub struct BatchSampler {
    /// Subject id -> indices into the record slice, in record order.
    by_subject: Vec<(String, Vec<usize>)>,
    p: usize,
    k: usize,
    seed: u64,
}

impl BatchSampler {
    pub fn new(records: &[ManifestRecord], p: usize, k: usize, seed: u64) -> Result<Self> {
        if p == 0 || k == 0 {
            return Err(Error::Config("batch needs p >= 1 and k >= 1".into()));
        }
        let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            map.entry(r.subject.as_str()).or_default().push(i);
        }
        if map.len() < p {
            return Err(Error::Config(format!(
                "batch wants {p} subjects but the split has only {}",
                map.len()
            )));
        }
        Ok(Self {
            by_subject: map
                .into_iter()
                .map(|(s, v)| (s.to_string(), v))
                .collect(),
            p,
            k,
            seed,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.p * self.k
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.by_subject.len() / self.p
    }

    /// Record indices for the batch at `step` (0-based): `p * k` entries,
    /// grouped by subject. Pure function of (seed, step).
    pub fn batch_for_step(&self, step: usize) -> Vec<usize> {
        let per_epoch = self.batches_per_epoch();
        let epoch = step / per_epoch;
        let slot = step % per_epoch;

        let mut order: Vec<usize> = (0..self.by_subject.len()).collect();
        let mut erng = seeds::stream(self.seed, "sampler-epoch", epoch as u64);
        order.shuffle(&mut erng);

        let chunk = &order[slot * self.p..(slot + 1) * self.p];
        let mut batch = Vec::with_capacity(self.p * self.k);
        for &si in chunk {
            let (_, seqs) = &self.by_subject[si];
            // A subject appears at most once per epoch, so (epoch, subject)
            // identifies the draw.
            let mut srng = seeds::stream(
                self.seed,
                "sampler-subject",
                (epoch as u64) * 1_000_003 + si as u64,
            );
            if seqs.len() >= self.k {
                // Without replacement: partial shuffle, take the head.
                let mut pool = seqs.clone();
                pool.shuffle(&mut srng);
                batch.extend_from_slice(&pool[..self.k]);
            } else {
                // Subject has fewer than k sequences: draw with replacement.
                for _ in 0..self.k {
                    batch.push(seqs[srng.gen_range(0..seqs.len())]);
                }
            }
        }
        batch
    }

    pub fn subjects(&self) -> impl Iterator<Item = &str> {
        self.by_subject.iter().map(|(s, _)| s.as_str())
    }
}
