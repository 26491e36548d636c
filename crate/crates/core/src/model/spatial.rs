//! Spatial stage: per-frame self-attention over joint tokens.
//!
//! Input `[T, J, in_ch]` is projected to `[T, J, d]` tokens (plus an optional
//! learnable per-joint embedding), then passed through pre-norm transformer
//! blocks whose attention operates within each frame independently: frames
//! form the batch axis of every matmul, so no information crosses time here.

use crate::error::Result;
use crate::numerics::NodeId;
use crate::Graph;

use super::config::ModelConfig;
use super::params::BoundParams;

const LN_EPS: f64 = 1e-5;

/// Runs the full spatial stage; returns the final `[T, J, d]` activation and
/// one hook entry per block.
pub(super) fn spatial_forward(
    g: &mut Graph,
    p: &BoundParams,
    cfg: &ModelConfig,
    input: NodeId,
) -> Result<(NodeId, Vec<(String, NodeId)>)> {
    // Coordinates arrive in absolute image units, where the shared offset of
    // the whole figure dwarfs the pose signal. Subtracting the per-frame
    // centroid before projecting keeps tokens about pose shape. The centroid
    // is a within-frame, permutation-invariant statistic, so frame
    // independence and joint-permutation equivariance are unaffected.
    let shape = g.value(input).shape().to_vec();
    let centroid = g.mean_axes(input, &[1])?;
    let centroid = g.reshape(centroid, &[shape[0], 1, shape[2]])?;
    let centered = g.sub(input, centroid)?;

    let w = p.get("spatial.token_proj.weight");
    let b = p.get("spatial.token_proj.bias");
    let proj = g.matmul(centered, w)?;
    let mut x = g.add(proj, b)?;
    if cfg.joint_embedding {
        let je = p.get("spatial.joint_embedding");
        x = g.add(x, je)?; // [T,J,d] + [J,d] broadcasts over frames
    }

    let mut hooks = Vec::with_capacity(cfg.spatial_blocks);
    for i in 0..cfg.spatial_blocks {
        x = attention_block(g, p, cfg, &format!("spatial.block{i}"), x)?;
        hooks.push((format!("spatial.block{i}.out"), x));
    }
    Ok((x, hooks))
}

/// Pre-norm block: `h = x + Attn(LN1(x))`, `y = h + FFN(LN2(h))`.
fn attention_block(
    g: &mut Graph,
    p: &BoundParams,
    cfg: &ModelConfig,
    path: &str,
    x: NodeId,
) -> Result<NodeId> {
    let ln1_g = p.get(&format!("{path}.ln1.gamma"));
    let ln1_b = p.get(&format!("{path}.ln1.beta"));
    let normed = g.layer_norm(x, ln1_g, ln1_b, 2, LN_EPS)?;
    let attn = multi_head_attention(g, p, cfg, &format!("{path}.attn"), normed)?;
    let h = g.add(x, attn)?;

    let ln2_g = p.get(&format!("{path}.ln2.gamma"));
    let ln2_b = p.get(&format!("{path}.ln2.beta"));
    let normed2 = g.layer_norm(h, ln2_g, ln2_b, 2, LN_EPS)?;
    let w1 = p.get(&format!("{path}.ffn.fc1.weight"));
    let b1 = p.get(&format!("{path}.ffn.fc1.bias"));
    let w2 = p.get(&format!("{path}.ffn.fc2.weight"));
    let b2 = p.get(&format!("{path}.ffn.fc2.bias"));
    let f1 = g.matmul(normed2, w1)?;
    let f1 = g.add(f1, b1)?;
    let act = g.gelu(f1);
    let f2 = g.matmul(act, w2)?;
    let f2 = g.add(f2, b2)?;
    g.add(h, f2)
}

/// Multi-head attention over axis 1 of `x: [batch, tokens, d]`.
///
/// Shared by the spatial stage (batch = frames, tokens = joints) and the
/// GaitFormer temporal stage (batch = joints, tokens = frames). Projection
/// weights are `[d, d]`, applied per batch element via broadcast matmul.
pub(super) fn multi_head_attention(
    g: &mut Graph,
    p: &BoundParams,
    cfg: &ModelConfig,
    path: &str,
    x: NodeId,
) -> Result<NodeId> {
    debug_assert_eq!(g.value(x).shape().len(), 3);
    let shape = g.value(x).shape().to_vec();
    let (batch, tokens, d) = (shape[0], shape[1], shape[2]);
    let (heads, dh) = (cfg.heads, cfg.head_dim());

    let project = |g: &mut Graph, which: char| -> Result<NodeId> {
        let w = p.get(&format!("{path}.w{which}"));
        let b = p.get(&format!("{path}.b{which}"));
        let y = g.matmul(x, w)?;
        g.add(y, b)
    };
    let q = project(g, 'q')?;
    let k = project(g, 'k')?;
    let v = project(g, 'v')?;

    // [batch, tokens, d] -> [batch, heads, tokens, dh]
    let split = |g: &mut Graph, t: NodeId| -> Result<NodeId> {
        let r = g.reshape(t, &[batch, tokens, heads, dh])?;
        g.transpose(r, &[0, 2, 1, 3])
    };
    let qh = split(g, q)?;
    let kh = split(g, k)?;
    let vh = split(g, v)?;

    let kt = g.transpose(kh, &[0, 1, 3, 2])?;
    let scores = g.matmul(qh, kt)?;
    let scaled = g.scale(scores, 1.0 / (dh as f64).sqrt());
    let attn = g.softmax(scaled, 3)?;
    let ctx = g.matmul(attn, vh)?;

    let merged = g.transpose(ctx, &[0, 2, 1, 3])?;
    let merged = g.reshape(merged, &[batch, tokens, d])?;
    let wo = p.get(&format!("{path}.wo"));
    let bo = p.get(&format!("{path}.bo"));
    let out = g.matmul(merged, wo)?;
    g.add(out, bo)
}
