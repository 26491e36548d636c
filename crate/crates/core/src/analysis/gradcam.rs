//! Gradient-weighted attribution over joints and frames.
//!
//! The target score is the cosine similarity between a sample's embedding
//! and a fixed reference embedding. Gradients of that score at a named layer
//! hook are averaged per channel into weights; the weighted activation sum is
//! rectified into a nonnegative joint-by-frame map.

use crate::error::{Error, Result};
use crate::model::{forward, BoundParams, ModelConfig, ParamStore};
use crate::{Graph, Tensor};

/// Nonnegative relevance grid, `joints` rows by `frames` columns.
#[derive(Clone, Debug)]
pub struct AttributionMap {
    pub joints: usize,
    pub frames: usize,
    pub layer: String,
    /// Row-major `[joints][frames]`.
    pub values: Vec<f64>,
}

impl AttributionMap {
    pub fn at(&self, joint: usize, frame: usize) -> f64 {
        self.values[joint * self.frames + frame]
    }
}

/// Channel-averaged, rectified weighting of activations by gradients.
///
/// Accepts either hook layout:
/// - `[T, J, d]` (spatial blocks): channel axis d, positions (t, j);
/// - `[C, T]` (temporal blocks), `C = J * d`: channel axis k of `c = j*d + k`,
///   positions (j, t).
pub fn attribution_from(
    activations: &Tensor,
    gradients: &Tensor,
    d: usize,
    layer: &str,
) -> Result<AttributionMap> {
    if activations.shape() != gradients.shape() {
        return Err(Error::Contract(format!(
            "activations {:?} vs gradients {:?}",
            activations.shape(),
            gradients.shape()
        )));
    }
    let a = activations.data();
    let g = gradients.data();
    match *activations.shape() {
        [t, j, dd] if dd == d => {
            let mut alpha = vec![0.0; d];
            for ti in 0..t {
                for ji in 0..j {
                    let base = (ti * j + ji) * d;
                    for (k, alpha_k) in alpha.iter_mut().enumerate() {
                        *alpha_k += g[base + k];
                    }
                }
            }
            let positions = (t * j) as f64;
            for alpha_k in alpha.iter_mut() {
                *alpha_k /= positions;
            }
            let mut values = vec![0.0; j * t];
            for ji in 0..j {
                for ti in 0..t {
                    let base = (ti * j + ji) * d;
                    let s: f64 = alpha.iter().enumerate().map(|(k, &w)| w * a[base + k]).sum();
                    values[ji * t + ti] = s.max(0.0);
                }
            }
            Ok(AttributionMap {
                joints: j,
                frames: t,
                layer: layer.to_string(),
                values,
            })
        }
        [c, t] if d > 0 && c % d == 0 => {
            let j = c / d;
            let mut alpha = vec![0.0; d];
            for ci in 0..c {
                for ti in 0..t {
                    alpha[ci % d] += g[ci * t + ti];
                }
            }
            let positions = (j * t) as f64;
            for alpha_k in alpha.iter_mut() {
                *alpha_k /= positions;
            }
            let mut values = vec![0.0; j * t];
            for ji in 0..j {
                for ti in 0..t {
                    let s: f64 = alpha
                        .iter()
                        .enumerate()
                        .map(|(k, &w)| w * a[(ji * d + k) * t + ti])
                        .sum();
                    values[ji * t + ti] = s.max(0.0);
                }
            }
            Ok(AttributionMap {
                joints: j,
                frames: t,
                layer: layer.to_string(),
                values,
            })
        }
        ref shape => Err(Error::Contract(format!(
            "hook shape {shape:?} does not fit d = {d} in either layout"
        ))),
    }
}

/// Runs one window through the model and attributes the cosine similarity
/// of its embedding to `reference` back onto the named layer hook.
pub fn grad_cam(
    store: &ParamStore,
    cfg: &ModelConfig,
    window: &Tensor,
    reference: &[f64],
    layer: &str,
) -> Result<AttributionMap> {
    if reference.len() != cfg.embedding_dim {
        return Err(Error::Contract(format!(
            "reference embedding has {} values, model emits {}",
            reference.len(),
            cfg.embedding_dim
        )));
    }
    let mut g = Graph::new();
    let p = BoundParams::bind(&mut g, store, false);
    // The input leaf carries requires_grad so gradients reach every hook.
    let input = g.leaf(window.clone(), true);
    let out = forward(&mut g, &p, cfg, input)?;
    let hook = out.hook(layer).ok_or_else(|| {
        Error::Config(format!(
            "unknown layer {layer:?}; valid hooks: {}",
            out.hook_names().join(", ")
        ))
    })?;
    let reference_node = g.constant(Tensor::new(vec![reference.len()], reference.to_vec())?);
    let target = g.cosine_sim(out.embedding, reference_node)?;
    g.backward(target)?;
    let activations = g.value(hook).clone();
    let gradients = g
        .grad_tensor(hook)
        .unwrap_or_else(|| Tensor::new(activations.shape().to_vec(), vec![0.0; activations.data().len()]).unwrap());
    attribution_from(&activations, &gradients, cfg.d_model, layer)
}
