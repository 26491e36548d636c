use std::io::Write;
use std::path::PathBuf;

use clap::Args;

use gaitmixer_core::checkpoint;
use gaitmixer_core::data::Dataset;
use gaitmixer_core::model::Variant;
use gaitmixer_core::trainer::Trainer;
use gaitmixer_core::{Error, Result};

use crate::config::{self, RunConfig};

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Run-config TOML; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset manifest (overrides [data] manifest).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub max_lr: Option<f64>,
    /// Temporal mixer: gaitmixer (depthwise conv) or gaitformer (attention).
    #[arg(long)]
    pub variant: Option<String>,
    /// Worker threads; 1 is the deterministic verification mode.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Subjects per batch.
    #[arg(long)]
    pub p: Option<usize>,
    /// Samples per subject per batch.
    #[arg(long)]
    pub k: Option<usize>,
    /// Continue a run from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

pub fn run(args: TrainArgs) -> Result<()> {
    let mut cfg: RunConfig = config::load_config(args.config.as_deref())?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(m) = args.manifest {
        cfg.data.manifest = Some(m);
    }
    if let Some(n) = args.steps {
        cfg.train.steps = n;
    }
    if let Some(lr) = args.max_lr {
        cfg.train.max_lr = lr;
    }
    if let Some(v) = &args.variant {
        cfg.model.variant = v.parse::<Variant>()?;
    }
    if let Some(t) = args.threads {
        cfg.threads = t;
        cfg.train.threads = t;
    }
    if let Some(p) = args.p {
        cfg.train.p = p;
    }
    if let Some(k) = args.k {
        cfg.train.k = k;
    }

    let manifest = cfg.data.manifest.clone().ok_or_else(|| {
        Error::Config("no dataset manifest: pass --manifest or set [data] manifest".into())
    })?;
    let out = config::resolve_out_dir(args.out, &cfg, "train");
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    cfg.out_dir = Some(out.clone());
    config::write_resolved(&cfg, &out)?;

    let dataset = Dataset::load(&manifest, cfg.data.width)?;
    let mut trainer = match &args.resume {
        Some(path) => {
            let ckpt = checkpoint::load(path, Some(&cfg.model))?;
            Trainer::from_checkpoint(
                &dataset.records,
                &dataset.sequences,
                ckpt,
                &cfg.model,
                &cfg.train,
                cfg.seed,
            )?
        }
        None => Trainer::new(
            &dataset.records,
            &dataset.sequences,
            &cfg.model,
            &cfg.train,
            cfg.seed,
        )?,
    };

    let log_path = out.join("train_log.jsonl");
    let mut log_file = std::fs::OpenOptions::new()
        .create(true)
        .append(args.resume.is_some())
        .write(true)
        .truncate(args.resume.is_none())
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;

    let interval = cfg.train.checkpoint_interval;
    while !trainer.is_done() {
        let log = trainer.train_step()?;
        let line = serde_json::to_string(&log)
            .map_err(|e| Error::Data(format!("serializing step log: {e}")))?;
        writeln!(log_file, "{line}").map_err(|e| Error::io(&log_path, e))?;
        let done = log.step + 1;
        if done % interval == 0 && !trainer.is_done() {
            let path = out.join(format!("ckpt-{done:06}.ckpt"));
            checkpoint::save(
                &path,
                trainer.model_config(),
                done as u64,
                trainer.store(),
                Some(trainer.optimizer()),
            )?;
        }
        if done % 50 == 0 || trainer.is_done() {
            println!(
                "step {done}/{}: loss {:.4}, lr {:.2e}, triplets {}",
                cfg.train.steps, log.loss, log.lr, log.triplets
            );
        }
    }

    let final_path = out.join("model.ckpt");
    checkpoint::save(
        &final_path,
        trainer.model_config(),
        trainer.step_index() as u64,
        trainer.store(),
        Some(trainer.optimizer()),
    )?;
    println!(
        "trained {} steps ({} empty-mine batches, {} skipped optimizer steps)\ncheckpoint: {}",
        trainer.step_index(),
        trainer.empty_mine_batches(),
        trainer.skipped_steps(),
        final_path.display()
    );
    Ok(())
}
