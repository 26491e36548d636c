//! End-to-end training: balanced batches, augmentation, forward passes,
//! mining, triplet loss, Adam with one-cycle learning rate.
//!
//! Each batch runs in two stages. Stage one records an independent forward
//! graph per sample (parallelizable; graphs stay alive). Stage two builds a
//! small loss graph over the embedding values, backpropagates it, then seeds
//! each sample graph's backward with the loss gradient of its embedding.
//! Parameter gradients are accumulated in fixed sample order, so training is
//! deterministic for any thread count; batches are addressed by step, so a
//! resumed run replays exactly the remaining schedule.

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::data::{augment, AugmentPolicy, BatchSampler, ManifestRecord, SkeletonSequence, JOINT_COUNT};
use crate::error::{Error, Result};
use crate::metric::{cosine_distances, mine, triplet_loss, LossConfig};
use crate::model::{forward, BoundParams, ModelConfig, ParamStore};
use crate::numerics::NodeId;
use crate::optim::{Adam, AdamConfig, OneCycle, StepOutcome};
use crate::{seeds, threads, Graph, Tensor};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Subjects per batch.
    pub p: usize,
    /// Samples per subject.
    pub k: usize,
    pub steps: usize,
    pub max_lr: f64,
    pub pct_warmup: f64,
    pub start_div: f64,
    pub final_div: f64,
    pub adam: AdamConfig,
    pub loss: LossConfig,
    pub augment: AugmentPolicy,
    /// Worker threads for per-sample forward/backward passes. Gradients are
    /// order-independent of this; 1 keeps everything on the caller thread.
    pub threads: usize,
    /// Steps between periodic checkpoints (CLI-level concern; stored here so
    /// one config file describes the run).
    pub checkpoint_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            p: 8,
            k: 4,
            steps: 600,
            max_lr: 6e-3,
            pct_warmup: 0.3,
            start_div: 25.0,
            final_div: 1e4,
            adam: AdamConfig::default(),
            loss: LossConfig::default(),
            augment: AugmentPolicy::default(),
            threads: 1,
            checkpoint_interval: 200,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p < 2 || self.k < 2 {
            return Err(Error::Config(format!(
                "metric batches need p >= 2 subjects and k >= 2 samples, got ({}, {})",
                self.p, self.k
            )));
        }
        if self.threads == 0 {
            return Err(Error::Config("threads must be >= 1".into()));
        }
        if self.checkpoint_interval == 0 {
            return Err(Error::Config("checkpoint_interval must be >= 1".into()));
        }
        self.schedule().validate()?;
        self.adam.validate()?;
        self.loss.validate()?;
        Ok(())
    }

    pub fn schedule(&self) -> OneCycle {
        OneCycle {
            max_lr: self.max_lr,
            total_steps: self.steps,
            pct_warmup: self.pct_warmup,
            start_div: self.start_div,
            final_div: self.final_div,
        }
    }
}

/// One training step's record, serialized as a JSONL line by the CLI.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    /// Mined triplets in this batch.
    pub triplets: usize,
    /// Batch mined nothing; the optimizer step was skipped.
    pub empty_mine: bool,
    /// Optimizer skipped the step over a non-finite gradient.
    pub skipped_non_finite: bool,
}

pub struct Trainer<'d> {
    records: &'d [ManifestRecord],
    sequences: &'d [SkeletonSequence],
    labels: Vec<usize>,
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    schedule: OneCycle,
    sampler: BatchSampler,
    store: ParamStore,
    adam: Adam,
    seed: u64,
    step: usize,
    empty_mine_batches: usize,
    skipped_steps: usize,
}

impl<'d> Trainer<'d> {
    /// Fresh training run: parameters initialized from `seed`.
    pub fn new(
        records: &'d [ManifestRecord],
        sequences: &'d [SkeletonSequence],
        model_cfg: &ModelConfig,
        cfg: &TrainConfig,
        seed: u64,
    ) -> Result<Self> {
        let store = ParamStore::init(model_cfg, seeds::derive(seed, "param-master", 0))?;
        let adam = Adam::new(cfg.adam, &store)?;
        Self::assemble(records, sequences, model_cfg.clone(), cfg.clone(), store, adam, seed, 0)
    }

    /// Resumes a checkpointed run. The checkpoint's model config must equal
    /// the requested one; optimizer state must be present.
    pub fn from_checkpoint(
        records: &'d [ManifestRecord],
        sequences: &'d [SkeletonSequence],
        ckpt: Checkpoint,
        model_cfg: &ModelConfig,
        cfg: &TrainConfig,
        seed: u64,
    ) -> Result<Self> {
        if &ckpt.model != model_cfg {
            return Err(Error::Checkpoint(
                "checkpoint model config differs from the requested one".into(),
            ));
        }
        let adam = ckpt.optimizer.ok_or_else(|| {
            Error::Checkpoint("checkpoint has no optimizer state; cannot resume".into())
        })?;
        if *adam.config() != cfg.adam {
            return Err(Error::Config(
                "optimizer hyperparameters differ from the checkpointed run".into(),
            ));
        }
        let step = ckpt.step as usize;
        Self::assemble(records, sequences, ckpt.model, cfg.clone(), ckpt.store, adam, seed, step)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        records: &'d [ManifestRecord],
        sequences: &'d [SkeletonSequence],
        model_cfg: ModelConfig,
        cfg: TrainConfig,
        store: ParamStore,
        adam: Adam,
        seed: u64,
        step: usize,
    ) -> Result<Self> {
        model_cfg.validate()?;
        cfg.validate()?;
        if model_cfg.joints != JOINT_COUNT || model_cfg.in_channels != 2 {
            return Err(Error::Config(format!(
                "training data is {JOINT_COUNT}-joint (x, y); model wants {} joints x {}",
                model_cfg.joints, model_cfg.in_channels
            )));
        }
        if records.len() != sequences.len() {
            return Err(Error::Contract(format!(
                "{} records but {} sequences",
                records.len(),
                sequences.len()
            )));
        }
        if records.is_empty() {
            return Err(Error::Data("empty training split".into()));
        }
        // Dense label per record for the miner.
        let mut subjects: Vec<&str> = records.iter().map(|r| r.subject.as_str()).collect();
        subjects.sort_unstable();
        subjects.dedup();
        let labels = records
            .iter()
            .map(|r| subjects.binary_search(&r.subject.as_str()).unwrap())
            .collect();
        let sampler = BatchSampler::new(records, cfg.p, cfg.k, seeds::derive(seed, "sampler", 0))?;
        let schedule = cfg.schedule();
        Ok(Self {
            records,
            sequences,
            labels,
            model_cfg,
            cfg,
            schedule,
            sampler,
            store,
            adam,
            seed,
            step,
            empty_mine_batches: 0,
            skipped_steps: 0,
        })
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.cfg.steps
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn optimizer(&self) -> &Adam {
        &self.adam
    }

    pub fn model_config(&self) -> &ModelConfig {
        &self.model_cfg
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Batches that mined no triplets so far.
    pub fn empty_mine_batches(&self) -> usize {
        self.empty_mine_batches
    }

    /// Optimizer steps skipped over non-finite gradients so far.
    pub fn skipped_steps(&self) -> usize {
        self.skipped_steps
    }

    /// Runs one batch; advances the step counter.
    pub fn train_step(&mut self) -> Result<StepLog> {
        if self.is_done() {
            return Err(Error::Contract(format!(
                "training already finished its {} steps",
                self.cfg.steps
            )));
        }
        let step = self.step;
        let lr = self.schedule.lr_at(step);
        let batch = self.sampler.batch_for_step(step);
        let b = batch.len();

        // Stage one: augmented window + recorded forward graph per sample.
        let windows: Result<Vec<Tensor>> = batch
            .iter()
            .enumerate()
            .map(|(i, &ri)| {
                let mut rng = seeds::stream(
                    self.seed,
                    "augment",
                    (step as u64) * (b as u64) + i as u64,
                );
                let sample = augment(
                    &self.sequences[ri],
                    self.model_cfg.frames,
                    &self.cfg.augment,
                    &mut rng,
                )?;
                Ok(sample.to_tensor())
            })
            .collect();
        let windows = windows?;

        let store = &self.store;
        let model_cfg = &self.model_cfg;
        let passes: Vec<Result<(Graph, Vec<NodeId>, NodeId, Vec<f64>)>> =
            threads::map_ordered(b, self.cfg.threads, |i| {
                let mut g = Graph::new();
                let p = BoundParams::bind(&mut g, store, true);
                let input = g.constant(windows[i].clone());
                let out = forward(&mut g, &p, model_cfg, input)?;
                let emb = g.value(out.embedding).data().to_vec();
                Ok((g, p.ids().to_vec(), out.embedding, emb))
            });
        let mut graphs = Vec::with_capacity(b);
        let mut embeddings = Vec::with_capacity(b);
        for pass in passes {
            let (g, ids, emb_node, emb) = pass?;
            graphs.push((g, ids, emb_node));
            embeddings.push(emb);
        }

        // Mine on the embedding values.
        let batch_labels: Vec<usize> = batch.iter().map(|&ri| self.labels[ri]).collect();
        let dists = cosine_distances(&embeddings);
        let mined = mine(&dists, &batch_labels, &self.cfg.loss)?;

        if mined.triplets.is_empty() {
            self.empty_mine_batches += 1;
            self.step += 1;
            return Ok(StepLog {
                step,
                lr,
                loss: 0.0,
                triplets: 0,
                empty_mine: true,
                skipped_non_finite: false,
            });
        }

        // Stage two: loss graph over embedding leaves.
        let mut gl = Graph::new();
        let leaves: Vec<NodeId> = embeddings
            .iter()
            .map(|e| gl.leaf(Tensor::new(vec![e.len()], e.clone()).unwrap(), true))
            .collect();
        let loss_node = triplet_loss(&mut gl, &leaves, &mined.triplets, self.cfg.loss.margin)?;
        let loss = gl.value(loss_node).data()[0];
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "loss {loss} at step {step}; batch: {}",
                self.describe_batch(&batch)
            )));
        }
        gl.backward(loss_node)?;

        // Seed each sample graph's backward with its embedding gradient and
        // accumulate parameter gradients in sample order.
        let seeds_per_sample: Vec<Option<Vec<f64>>> = leaves
            .iter()
            .map(|&l| gl.grad(l).map(|s| s.to_vec()))
            .collect();
        threads::for_each_mut(&mut graphs, self.cfg.threads, |i, (g, _, emb_node)| {
            match &seeds_per_sample[i] {
                Some(seed) => g.backward_seeded(*emb_node, seed),
                // Sample fed no triplet; nothing flows back through it.
                None => Ok(()),
            }
        })?;

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.store.len()];
        for (g, ids, _) in &graphs {
            for (pi, &id) in ids.iter().enumerate() {
                if let Some(gbuf) = g.grad(id) {
                    match &mut grads[pi] {
                        Some(acc) => {
                            for (a, v) in acc.iter_mut().zip(gbuf) {
                                *a += v;
                            }
                        }
                        None => grads[pi] = Some(gbuf.to_vec()),
                    }
                }
            }
        }

        let outcome = self.adam.step(&mut self.store, &grads, lr)?;
        let skipped = matches!(outcome, StepOutcome::SkippedNonFinite { .. });
        if skipped {
            self.skipped_steps += 1;
        }
        self.step += 1;
        Ok(StepLog {
            step,
            lr,
            loss,
            triplets: mined.triplets.len(),
            empty_mine: false,
            skipped_non_finite: skipped,
        })
    }

    fn describe_batch(&self, batch: &[usize]) -> String {
        batch
            .iter()
            .map(|&ri| {
                let r = &self.records[ri];
                format!("{}/{}-{:02}@{:03}", r.subject, r.condition, r.seq_index, r.view_deg)
            })
            .collect::<Vec<_>>()
            .join(", ")
    }
}
