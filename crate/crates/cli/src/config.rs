//! Unified run configuration: one TOML document drives every subcommand.
//!
//! Flags override file values; each command writes the fully merged result
//! as `resolved.toml` next to its outputs, so any run can be repeated from
//! that file alone.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use gaitmixer_core::data::{Condition, SynthSpec};
use gaitmixer_core::model::ModelConfig;
use gaitmixer_core::trainer::TrainConfig;
use gaitmixer_core::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Dataset manifest consumed by train/eval/analyze.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    /// Divisor normalizing pixel coordinates into [0, 1].
    pub width: f64,
    pub synth: SynthSpec,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            manifest: None,
            width: 320.0,
            synth: SynthSpec::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Probe conditions to report.
    pub conditions: Vec<Condition>,
    /// Checkpoint to evaluate or analyze.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            conditions: vec![Condition::Nm, Condition::Bg, Condition::Cl],
            checkpoint: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    /// Hook to analyze; defaults to the final temporal block.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layer: Option<String>,
    /// Explicit channel indices; empty selects by activation variance.
    pub channels: Vec<usize>,
    /// How many channels to auto-select when `channels` is empty.
    pub channel_count: usize,
    /// Pixels per heatmap grid cell.
    pub cell: usize,
    /// Manifest row indices to analyze.
    pub samples: Vec<usize>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            layer: None,
            channels: Vec::new(),
            channel_count: 4,
            cell: 6,
            samples: vec![0],
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Output directory. Unset, it falls back to $GAITMIXER_OUT/<command>,
    /// then ./runs/<command>.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Worker threads for evaluation and analysis; training reads
    /// `train.threads`. The --threads flag sets both.
    pub threads: usize,
    pub model: ModelConfig,
    pub data: DataSection,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub analysis: AnalysisSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: None,
            threads: 1,
            model: ModelConfig::default(),
            data: DataSection::default(),
            train: TrainConfig::default(),
            eval: EvalSection::default(),
            analysis: AnalysisSection::default(),
        }
    }
}

pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

/// Merged output directory: flag, then config, then $GAITMIXER_OUT/<cmd>,
/// then ./runs/<cmd>.
pub fn resolve_out_dir(flag: Option<PathBuf>, cfg: &RunConfig, command: &str) -> PathBuf {
    flag.or_else(|| cfg.out_dir.clone())
        .or_else(|| std::env::var_os("GAITMIXER_OUT").map(|root| PathBuf::from(root).join(command)))
        .unwrap_or_else(|| PathBuf::from("runs").join(command))
}

/// Writes the merged config as `resolved.toml` inside `dir`.
pub fn write_resolved(cfg: &RunConfig, dir: &Path) -> Result<PathBuf> {
    let path = dir.join("resolved.toml");
    let doc = toml::to_string_pretty(cfg)
        .map_err(|e| Error::Config(format!("serializing resolved config: {e}")))?;
    std::fs::write(&path, doc).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Parses a comma-separated condition list ("NM,BG").
pub fn parse_conditions(list: &str) -> Result<Vec<Condition>> {
    list.split(',')
        .map(|s| s.trim().parse::<Condition>())
        .collect()
}

/// Parses a comma-separated index list ("0,3,7").
pub fn parse_indices(list: &str) -> Result<Vec<usize>> {
    list.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Error::Config(format!("bad index {:?}: {e}", s.trim())))
        })
        .collect()
}
