use std::path::PathBuf;

use clap::Args;

use gaitmixer_core::data::write_dataset;
use gaitmixer_core::{Error, Result};

use crate::config::{self, RunConfig};

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Run-config TOML; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (dataset goes to <out>/data).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Subjects to synthesize.
    #[arg(long)]
    pub subjects: Option<usize>,
    /// Normal-walk sequences per subject. Zeroes the BG/CL counts unless
    /// --bg-seqs/--cl-seqs are also given.
    #[arg(long)]
    pub seqs: Option<usize>,
    #[arg(long)]
    pub bg_seqs: Option<usize>,
    #[arg(long)]
    pub cl_seqs: Option<usize>,
    /// Frames per sequence.
    #[arg(long)]
    pub frames: Option<usize>,
}

pub fn run(args: SynthArgs) -> Result<()> {
    let mut cfg: RunConfig = config::load_config(args.config.as_deref())?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.subjects {
        cfg.data.synth.subjects = n;
    }
    if let Some(n) = args.seqs {
        cfg.data.synth.nm_seqs = n;
        if args.bg_seqs.is_none() {
            cfg.data.synth.bg_seqs = 0;
        }
        if args.cl_seqs.is_none() {
            cfg.data.synth.cl_seqs = 0;
        }
    }
    if let Some(n) = args.bg_seqs {
        cfg.data.synth.bg_seqs = n;
    }
    if let Some(n) = args.cl_seqs {
        cfg.data.synth.cl_seqs = n;
    }
    if let Some(n) = args.frames {
        cfg.data.synth.frames = n;
    }
    cfg.data.synth.validate()?;

    let out = config::resolve_out_dir(args.out, &cfg, "synth");
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    cfg.out_dir = Some(out.clone());

    let (manifest, records) = write_dataset(&out.join("data"), &cfg.data.synth, cfg.seed)?;
    cfg.data.manifest = Some(manifest.clone());
    config::write_resolved(&cfg, &out)?;
    println!(
        "wrote {} sequences for {} subjects\nmanifest: {}",
        records.len(),
        cfg.data.synth.subjects,
        manifest.display()
    );
    Ok(())
}
