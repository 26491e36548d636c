use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use gaitmixer_core::analysis::{
    feature_map_at, grad_cam, high_freq_fraction, log1p_scale, render_heatmap,
    select_channels_by_variance, spectrum_of_channel,
};
use gaitmixer_core::checkpoint;
use gaitmixer_core::data::Dataset;
use gaitmixer_core::model::embed_window;
use gaitmixer_core::{Error, Result};

use crate::config::{self, RunConfig};

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Run-config TOML; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset manifest (overrides [data] manifest).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Checkpoint to analyze (overrides [eval] checkpoint).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Hook name (see inspect-checkpoint or error text for the list).
    #[arg(long)]
    pub layer: Option<String>,
    /// Explicit channel indices, comma separated.
    #[arg(long)]
    pub channels: Option<String>,
    /// Channels to auto-select by variance when --channels is absent.
    #[arg(long)]
    pub channel_count: Option<usize>,
    /// Manifest row indices to analyze, comma separated.
    #[arg(long)]
    pub samples: Option<String>,
    /// Pixels per heatmap cell.
    #[arg(long)]
    pub cell: Option<usize>,
}

#[derive(Serialize)]
struct HighFreqReport<'a> {
    variant: &'a str,
    layer: String,
    /// Mean high-frequency energy fraction over samples and channels.
    mean_high_freq_fraction: f64,
}

pub fn run(args: AnalyzeArgs) -> Result<()> {
    let mut cfg: RunConfig = config::load_config(args.config.as_deref())?;
    if let Some(m) = args.manifest {
        cfg.data.manifest = Some(m);
    }
    if let Some(c) = args.checkpoint {
        cfg.eval.checkpoint = Some(c);
    }
    if let Some(l) = args.layer {
        cfg.analysis.layer = Some(l);
    }
    if let Some(list) = &args.channels {
        cfg.analysis.channels = config::parse_indices(list)?;
    }
    if let Some(n) = args.channel_count {
        cfg.analysis.channel_count = n;
    }
    if let Some(list) = &args.samples {
        cfg.analysis.samples = config::parse_indices(list)?;
    }
    if let Some(c) = args.cell {
        cfg.analysis.cell = c;
    }

    let manifest = cfg.data.manifest.clone().ok_or_else(|| {
        Error::Config("no dataset manifest: pass --manifest or set [data] manifest".into())
    })?;
    let ckpt_path = cfg.eval.checkpoint.clone().ok_or_else(|| {
        Error::Config("no checkpoint: pass --checkpoint or set [eval] checkpoint".into())
    })?;
    let ckpt = checkpoint::load(&ckpt_path, None)?;
    cfg.model = ckpt.model.clone();

    let out = config::resolve_out_dir(args.out, &cfg, "analyze");
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    cfg.out_dir = Some(out.clone());
    config::write_resolved(&cfg, &out)?;

    let dataset = Dataset::load(&manifest, cfg.data.width)?;
    let model = &ckpt.model;
    let cell = cfg.analysis.cell;

    let mut fraction_sum = 0.0;
    let mut fraction_count = 0usize;
    let mut layer_name = String::new();
    for &i in &cfg.analysis.samples {
        if i >= dataset.len() {
            return Err(Error::Data(format!(
                "sample {i} out of range; the manifest lists {} sequences",
                dataset.len()
            )));
        }
        let window = dataset.sequences[i].center_crop(model.frames)?.to_tensor();
        let (name, feature) =
            feature_map_at(&ckpt.store, model, &window, cfg.analysis.layer.as_deref())?;
        layer_name = name.clone();

        let channels = if cfg.analysis.channels.is_empty() {
            select_channels_by_variance(&feature, model.d_model, cfg.analysis.channel_count)?
        } else {
            for &k in &cfg.analysis.channels {
                if k >= model.d_model {
                    return Err(Error::Config(format!(
                        "channel {k} out of range (d_model = {})",
                        model.d_model
                    )));
                }
            }
            cfg.analysis.channels.clone()
        };
        for k in channels {
            let spec = spectrum_of_channel(&feature, model.d_model, k)?;
            fraction_sum += high_freq_fraction(&spec.magnitude, spec.rows, spec.cols);
            fraction_count += 1;
            let png = out.join(format!("sample{i}-{name}-ch{k}-fft.png"));
            render_heatmap(
                &log1p_scale(&spec.magnitude),
                spec.rows,
                spec.cols,
                cell,
                &png,
            )?;
        }

        // Attribution target: similarity to another sequence of the same
        // subject, so the map highlights what makes this walk look like
        // that identity.
        let me = &dataset.records[i];
        let other = dataset
            .records
            .iter()
            .position(|r| r.subject == me.subject && !std::ptr::eq(r, me))
            .ok_or_else(|| {
                Error::Data(format!(
                    "subject {} has no second sequence to reference",
                    me.subject
                ))
            })?;
        let reference_window = dataset.sequences[other].center_crop(model.frames)?.to_tensor();
        let reference = embed_window(&ckpt.store, model, &reference_window)?;
        let map = grad_cam(&ckpt.store, model, &window, &reference, &name)?;
        let png = out.join(format!("sample{i}-{name}-gradcam.png"));
        render_heatmap(&map.values, map.joints, map.frames, cell, &png)?;
    }

    let report = HighFreqReport {
        variant: model.variant.name(),
        layer: layer_name,
        mean_high_freq_fraction: fraction_sum / fraction_count.max(1) as f64,
    };
    let report_path = out.join("highfreq.json");
    let doc = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Data(format!("serializing spectrum report: {e}")))?;
    std::fs::write(&report_path, doc).map_err(|e| Error::io(&report_path, e))?;
    println!(
        "analyzed {} samples at {}; high-frequency fraction {:.4}\noutputs: {}",
        cfg.analysis.samples.len(),
        report.layer,
        report.mean_high_freq_fraction,
        out.display()
    );
    Ok(())
}
