//! Embedding head: pool, normalize, project, and place on the unit sphere.

use crate::error::Result;
use crate::numerics::NodeId;
use crate::Graph;

use super::config::ModelConfig;
use super::params::BoundParams;

const LN_EPS: f64 = 1e-5;

pub(super) struct HeadOut {
    /// Pooled `[d]` hidden vector (pre-normalization).
    pub hidden: NodeId,
    /// Unit-norm `[embedding_dim]` metric embedding.
    pub embedding: NodeId,
}

/// Collapses the temporal output `y: [C, T]` to the final embedding:
/// mean over joints and frames -> `[d]`, LayerNorm, linear projection to
/// `[embedding_dim]`, l2 normalization.
pub(super) fn head_forward(
    g: &mut Graph,
    p: &BoundParams,
    cfg: &ModelConfig,
    y_ct: NodeId,
) -> Result<HeadOut> {
    let (j, d, t) = (cfg.joints, cfg.d_model, cfg.frames);
    let grid = g.reshape(y_ct, &[j, d, t])?;
    let hidden = g.mean_axes(grid, &[0, 2])?; // [d]

    let ln_g = p.get("head.ln.gamma");
    let ln_b = p.get("head.ln.beta");
    let normed = g.layer_norm(hidden, ln_g, ln_b, 0, LN_EPS)?;

    let row = g.reshape(normed, &[1, d])?;
    let w = p.get("head.fc.weight");
    let b = p.get("head.fc.bias");
    let proj = g.matmul(row, w)?;
    let proj = g.add(proj, b)?;
    let flat = g.reshape(proj, &[cfg.embedding_dim])?;
    let embedding = g.l2_normalize(flat, 0)?;
    Ok(HeadOut { hidden, embedding })
}
