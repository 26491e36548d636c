//! Network hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{PadMode, PaddingSpec};

/// Which temporal token mixer the network uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Large-kernel depthwise convolution over time (the default model).
    GaitMixer,
    /// Per-joint self-attention over time; everything else identical.
    GaitFormer,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::GaitMixer => "gaitmixer",
            Variant::GaitFormer => "gaitformer",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaitmixer" => Ok(Variant::GaitMixer),
            "gaitformer" => Ok(Variant::GaitFormer),
            other => Err(Error::Config(format!(
                "unknown variant '{}', expected gaitmixer or gaitformer",
                other
            ))),
        }
    }
}

/// Where the temporal convolution's padding deficit goes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadLayout {
    /// All `kernel - 1` samples prepended (the default; keeps each output
    /// step a function of present and past samples only).
    Prepend,
    /// Split evenly around the window, `(kernel-1)/2` left and `kernel/2`
    /// right.
    Symmetric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Tokens per frame (skeleton joints).
    pub joints: usize,
    /// Input channels per joint (x, y).
    pub in_channels: usize,
    /// Frames per sequence window.
    pub frames: usize,
    /// Token embedding width.
    pub d_model: usize,
    /// Attention heads (spatial stage, and temporal stage on GaitFormer).
    pub heads: usize,
    pub spatial_blocks: usize,
    /// Feed-forward expansion in the spatial blocks.
    pub mlp_ratio: f64,
    /// Learnable per-joint embedding added to the projected tokens.
    pub joint_embedding: bool,
    pub temporal_blocks: usize,
    /// Depthwise kernel length (GaitMixer temporal stage).
    pub kernel_size: usize,
    pub pad_mode: PadMode,
    pub pad_layout: PadLayout,
    /// Final metric-embedding width.
    pub embedding_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::GaitMixer,
            joints: 17,
            in_channels: 2,
            frames: 60,
            d_model: 256,
            heads: 8,
            spatial_blocks: 4,
            mlp_ratio: 4.0,
            joint_embedding: true,
            temporal_blocks: 4,
            kernel_size: 31,
            pad_mode: PadMode::Reflect,
            pad_layout: PadLayout::Prepend,
            embedding_dim: 128,
        }
    }
}

impl ModelConfig {
    /// Temporal channel count: one channel per (joint, embedding dim) pair.
    pub fn channels(&self) -> usize {
        self.joints * self.d_model
    }

    /// Per-head width.
    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    /// Spatial feed-forward width.
    pub fn ffn_dim(&self) -> usize {
        (self.d_model as f64 * self.mlp_ratio).round() as usize
    }

    pub fn padding(&self) -> PaddingSpec {
        match self.pad_layout {
            PadLayout::Prepend => PaddingSpec::prepend(self.pad_mode, self.kernel_size),
            PadLayout::Symmetric => PaddingSpec::symmetric(self.pad_mode, self.kernel_size),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive: [(&str, usize); 8] = [
            ("joints", self.joints),
            ("in_channels", self.in_channels),
            ("frames", self.frames),
            ("d_model", self.d_model),
            ("heads", self.heads),
            ("spatial_blocks", self.spatial_blocks),
            ("temporal_blocks", self.temporal_blocks),
            ("embedding_dim", self.embedding_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{} must be positive", name)));
            }
        }
        if self.d_model % self.heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} must be divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        if !(self.mlp_ratio.is_finite() && self.mlp_ratio > 0.0) || self.ffn_dim() == 0 {
            return Err(Error::Config(format!(
                "mlp_ratio {} yields an empty feed-forward layer",
                self.mlp_ratio
            )));
        }
        if self.variant == Variant::GaitMixer {
            self.padding().validate(self.kernel_size, self.frames)?;
        }
        Ok(())
    }
}
