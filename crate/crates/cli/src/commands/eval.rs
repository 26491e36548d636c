use std::path::PathBuf;

use clap::Args;

use gaitmixer_core::checkpoint;
use gaitmixer_core::data::{Condition, Dataset};
use gaitmixer_core::evaluator::{embed_all, rank1, render_table, to_jsonl, GallerySplit};
use gaitmixer_core::{Error, Result};

use crate::config::{self, RunConfig};

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Run-config TOML; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset manifest (overrides [data] manifest).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Checkpoint to evaluate (overrides [eval] checkpoint).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Probe conditions to report, comma separated (e.g. NM,BG).
    #[arg(long)]
    pub conditions: Option<String>,
    #[arg(long)]
    pub threads: Option<usize>,
}

pub fn run(args: EvalArgs) -> Result<()> {
    let mut cfg: RunConfig = config::load_config(args.config.as_deref())?;
    if let Some(m) = args.manifest {
        cfg.data.manifest = Some(m);
    }
    if let Some(c) = args.checkpoint {
        cfg.eval.checkpoint = Some(c);
    }
    if let Some(list) = &args.conditions {
        cfg.eval.conditions = config::parse_conditions(list)?;
    }
    if let Some(t) = args.threads {
        cfg.threads = t;
        cfg.train.threads = t;
    }

    let manifest = cfg.data.manifest.clone().ok_or_else(|| {
        Error::Config("no dataset manifest: pass --manifest or set [data] manifest".into())
    })?;
    let ckpt_path = cfg.eval.checkpoint.clone().ok_or_else(|| {
        Error::Config("no checkpoint: pass --checkpoint or set [eval] checkpoint".into())
    })?;
    let ckpt = checkpoint::load(&ckpt_path, None)?;
    // The checkpoint header is the model authority; the resolved config
    // records what actually ran.
    cfg.model = ckpt.model.clone();

    let out = config::resolve_out_dir(args.out, &cfg, "eval");
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    cfg.out_dir = Some(out.clone());
    config::write_resolved(&cfg, &out)?;

    let dataset = Dataset::load(&manifest, cfg.data.width)?;
    let outcome = embed_all(
        &dataset.records,
        &dataset.sequences,
        &ckpt.store,
        &ckpt.model,
        cfg.threads,
    )?;
    for s in &outcome.skipped {
        eprintln!(
            "skipping {}/{}-{:02}@{:03}: {} frames, window needs {}",
            s.subject, s.condition, s.seq_index, s.view_deg, s.frames, s.needed
        );
    }

    let mut split = GallerySplit::from_embeddings(outcome.embedded);
    if !cfg.eval.conditions.contains(&Condition::Nm) {
        split.probes_nm.clear();
    }
    if !cfg.eval.conditions.contains(&Condition::Bg) {
        split.probes_bg.clear();
    }
    if !cfg.eval.conditions.contains(&Condition::Cl) {
        split.probes_cl.clear();
    }
    let report = rank1(&split)?;

    let records_path = out.join("eval_records.jsonl");
    std::fs::write(&records_path, to_jsonl(&report)?).map_err(|e| Error::io(&records_path, e))?;
    let table = render_table(&report);
    let table_path = out.join("eval_table.txt");
    std::fs::write(&table_path, &table).map_err(|e| Error::io(&table_path, e))?;
    print!("{table}");
    println!("records: {}", records_path.display());
    Ok(())
}
