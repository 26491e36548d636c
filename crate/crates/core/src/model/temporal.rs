//! Temporal stage: token mixing along time over flattened channels.
//!
//! The spatial output is flattened to `[C, T]` with channel `c = j*d + k`
//! (joint-major), so each row is one embedding dimension of one joint traced
//! through time. GaitMixer mixes tokens with a large-kernel depthwise
//! convolution per channel; GaitFormer swaps that for per-joint self-attention
//! over frames. Both follow the mix with channel LayerNorm + GELU and a
//! residual, then a 1x1 convolution across all channels with its own
//! norm and residual:
//!
//! ```text
//! u = x + GELU(LN1(mix(x)))
//! y = u + PW(LN2(u))
//! ```
//!
//! With `LN` affine set to zero this block is exactly the identity, which the
//! construction tests exploit.

use crate::error::Result;
use crate::numerics::NodeId;
use crate::Graph;

use super::config::{ModelConfig, Variant};
use super::params::BoundParams;
use super::spatial::multi_head_attention;

const LN_EPS: f64 = 1e-5;

/// Runs the temporal stage on `x: [C, T]`; returns the final `[C, T]`
/// activation and one hook entry per block.
pub(super) fn temporal_forward(
    g: &mut Graph,
    p: &BoundParams,
    cfg: &ModelConfig,
    mut x: NodeId,
) -> Result<(NodeId, Vec<(String, NodeId)>)> {
    let mut hooks = Vec::with_capacity(cfg.temporal_blocks);
    for i in 0..cfg.temporal_blocks {
        x = temporal_block(g, p, cfg, &format!("temporal.block{i}"), x)?;
        hooks.push((format!("temporal.block{i}.out"), x));
    }
    Ok((x, hooks))
}

fn temporal_block(
    g: &mut Graph,
    p: &BoundParams,
    cfg: &ModelConfig,
    path: &str,
    x: NodeId,
) -> Result<NodeId> {
    let mixed = match cfg.variant {
        Variant::GaitMixer => {
            let kernels = p.get(&format!("{path}.dw.kernels"));
            g.depthwise_conv1d(x, kernels, cfg.padding())?
        }
        Variant::GaitFormer => joint_time_attention(g, p, cfg, path, x)?,
    };
    let ln1_g = p.get(&format!("{path}.ln1.gamma"));
    let ln1_b = p.get(&format!("{path}.ln1.beta"));
    let normed = g.layer_norm(mixed, ln1_g, ln1_b, 0, LN_EPS)?;
    let act = g.gelu(normed);
    let u = g.add(x, act)?;

    let ln2_g = p.get(&format!("{path}.ln2.gamma"));
    let ln2_b = p.get(&format!("{path}.ln2.beta"));
    let normed2 = g.layer_norm(u, ln2_g, ln2_b, 0, LN_EPS)?;
    let w = p.get(&format!("{path}.pw.weight"));
    let b = p.get(&format!("{path}.pw.bias"));
    let pw = g.pointwise_conv(normed2, w, Some(b))?;
    g.add(u, pw)
}

/// GaitFormer token mixer: self-attention over frames, independently per
/// joint, with projections shared across joints.
fn joint_time_attention(
    g: &mut Graph,
    p: &BoundParams,
    cfg: &ModelConfig,
    path: &str,
    x: NodeId,
) -> Result<NodeId> {
    let (j, d, t) = (cfg.joints, cfg.d_model, cfg.frames);
    let grid = g.reshape(x, &[j, d, t])?;
    let tokens = g.transpose(grid, &[0, 2, 1])?; // [J, T, d]
    let attn = multi_head_attention(g, p, cfg, &format!("{path}.attn"), tokens)?;
    let back = g.transpose(attn, &[0, 2, 1])?;
    g.reshape(back, &[j * d, t])
}

/// Converts the spatial stage output `z: [T, J, d]` to the temporal layout
/// `[C, T]`. For GaitFormer a learnable positional embedding `[T, d]` is
/// added to every joint's token sequence on the way in.
pub(super) fn flatten_to_channels(
    g: &mut Graph,
    p: &BoundParams,
    cfg: &ModelConfig,
    z_tjd: NodeId,
) -> Result<NodeId> {
    let (j, d, t) = (cfg.joints, cfg.d_model, cfg.frames);
    match cfg.variant {
        Variant::GaitMixer => {
            let jdt = g.transpose(z_tjd, &[1, 2, 0])?; // [J, d, T]
            g.reshape(jdt, &[j * d, t])
        }
        Variant::GaitFormer => {
            let jtd = g.transpose(z_tjd, &[1, 0, 2])?; // [J, T, d]
            let pos = p.get("temporal.pos_embedding");
            let with_pos = g.add(jtd, pos)?; // broadcast over joints
            let jdt = g.transpose(with_pos, &[0, 2, 1])?;
            g.reshape(jdt, &[j * d, t])
        }
    }
}
