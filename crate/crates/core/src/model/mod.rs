//! GaitMixer network: spatial attention mixer, temporal mixer, metric head.
//!
//! The forward pass is a pure function of a [`ParamStore`] and an input
//! window `[T, J, in_ch]`, recorded on a caller-supplied [`Graph`] so
//! training, evaluation, and attribution all share one code path.

mod config;
mod head;
mod params;
mod spatial;
mod temporal;

pub use config::{ModelConfig, PadLayout, Variant};
pub use params::{parameter_layout, BoundParams, Init, ParamSpec, ParamStore};

use crate::error::{Error, Result};
use crate::numerics::NodeId;
use crate::{Graph, Tensor};

/// Handles into one recorded forward pass.
pub struct ForwardOut {
    /// Spatial stage output, `[J, T, d]`.
    pub z: NodeId,
    /// Temporal stage output, `[C, T]` with `C = J * d`.
    pub temporal_out: NodeId,
    /// Pooled hidden vector, `[d]`.
    pub hidden: NodeId,
    /// Unit-norm metric embedding, `[embedding_dim]`.
    pub embedding: NodeId,
    /// Named intermediate activations: `spatial.block{i}.out` (`[T, J, d]`)
    /// and `temporal.block{i}.out` (`[C, T]`), in forward order.
    pub hooks: Vec<(String, NodeId)>,
}

impl ForwardOut {
    pub fn hook(&self, name: &str) -> Option<NodeId> {
        self.hooks
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, id)| id)
    }

    pub fn hook_names(&self) -> Vec<&str> {
        self.hooks.iter().map(|(n, _)| n.as_str()).collect()
    }
}

/// Records the full forward pass of `input` (a `[T, J, in_ch]` node of `g`).
pub fn forward(
    g: &mut Graph,
    p: &BoundParams,
    cfg: &ModelConfig,
    input: NodeId,
) -> Result<ForwardOut> {
    cfg.validate()?;
    let want = [cfg.frames, cfg.joints, cfg.in_channels];
    if g.value(input).shape() != want {
        return Err(Error::Contract(format!(
            "model input shape {:?} does not match configured {:?}",
            g.value(input).shape(),
            want
        )));
    }

    let (x_tjd, mut hooks) = spatial::spatial_forward(g, p, cfg, input)?;
    let z = g.transpose(x_tjd, &[1, 0, 2])?; // [J, T, d]

    let flat = temporal::flatten_to_channels(g, p, cfg, x_tjd)?;
    let (temporal_out, t_hooks) = temporal::temporal_forward(g, p, cfg, flat)?;
    hooks.extend(t_hooks);

    let head = head::head_forward(g, p, cfg, temporal_out)?;
    Ok(ForwardOut {
        z,
        temporal_out,
        hidden: head.hidden,
        embedding: head.embedding,
        hooks,
    })
}

/// Convenience inference path: runs one window through the network with
/// non-trainable parameters and returns the embedding values.
pub fn embed_window(store: &ParamStore, cfg: &ModelConfig, window: &Tensor) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let p = BoundParams::bind(&mut g, store, false);
    let input = g.constant(window.clone());
    let out = forward(&mut g, &p, cfg, input)?;
    Ok(g.value(out.embedding).data().to_vec())
}
