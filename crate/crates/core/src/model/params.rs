//! Parameter layout, initialization, and storage.
//!
//! [`parameter_layout`] is the single source of truth for which tensors a
//! configuration owns, in which order, and how each is initialized. The
//! checkpoint format, the optimizer state, and graph binding all follow this
//! order, so two stores from the same config always align index-by-index.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::NodeId;
use crate::seeds;
use crate::{Graph, Tensor};

use super::config::{ModelConfig, Variant};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Uniform in `[-limit, limit]` with `limit = sqrt(6 / (fan_in + fan_out))`.
    Xavier { fan_in: usize, fan_out: usize },
    /// Uniform in `[-limit, limit]`.
    Uniform { limit: f64 },
    Normal { std: f64 },
    Zeros,
    Ones,
}

#[derive(Clone, Debug)]
pub struct ParamSpec {
    pub path: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

fn spec(path: String, shape: &[usize], init: Init) -> ParamSpec {
    ParamSpec {
        path,
        shape: shape.to_vec(),
        init,
    }
}

fn xavier(fan_in: usize, fan_out: usize) -> Init {
    Init::Xavier { fan_in, fan_out }
}

/// Linear layer pair `{path}.weight [in, out]` + `{path}.bias [out]`.
fn linear(out: &mut Vec<ParamSpec>, path: &str, d_in: usize, d_out: usize) {
    out.push(spec(format!("{path}.weight"), &[d_in, d_out], xavier(d_in, d_out)));
    out.push(spec(format!("{path}.bias"), &[d_out], Init::Zeros));
}

fn layer_norm(out: &mut Vec<ParamSpec>, path: &str, len: usize) {
    out.push(spec(format!("{path}.gamma"), &[len], Init::Ones));
    out.push(spec(format!("{path}.beta"), &[len], Init::Zeros));
}

fn attention(out: &mut Vec<ParamSpec>, path: &str, d: usize) {
    for proj in ["wq", "wk", "wv", "wo"] {
        out.push(spec(format!("{path}.{proj}"), &[d, d], xavier(d, d)));
    }
    for bias in ["bq", "bk", "bv", "bo"] {
        out.push(spec(format!("{path}.{bias}"), &[d], Init::Zeros));
    }
}

/// Full parameter list for a configuration, in canonical order.
pub fn parameter_layout(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let d = cfg.d_model;
    let c = cfg.channels();
    let mut out = Vec::new();

    linear(&mut out, "spatial.token_proj", cfg.in_channels, d);
    if cfg.joint_embedding {
        out.push(spec(
            "spatial.joint_embedding".into(),
            &[cfg.joints, d],
            Init::Normal { std: 0.02 },
        ));
    }
    for i in 0..cfg.spatial_blocks {
        let p = format!("spatial.block{i}");
        layer_norm(&mut out, &format!("{p}.ln1"), d);
        attention(&mut out, &format!("{p}.attn"), d);
        layer_norm(&mut out, &format!("{p}.ln2"), d);
        linear(&mut out, &format!("{p}.ffn.fc1"), d, cfg.ffn_dim());
        linear(&mut out, &format!("{p}.ffn.fc2"), cfg.ffn_dim(), d);
    }

    if cfg.variant == Variant::GaitFormer {
        out.push(spec(
            "temporal.pos_embedding".into(),
            &[cfg.frames, d],
            Init::Normal { std: 0.02 },
        ));
    }
    for i in 0..cfg.temporal_blocks {
        let p = format!("temporal.block{i}");
        match cfg.variant {
            Variant::GaitMixer => {
                let limit = 1.0 / (cfg.kernel_size as f64).sqrt();
                out.push(spec(
                    format!("{p}.dw.kernels"),
                    &[c, cfg.kernel_size],
                    Init::Uniform { limit },
                ));
            }
            Variant::GaitFormer => {
                attention(&mut out, &format!("{p}.attn"), d);
            }
        }
        layer_norm(&mut out, &format!("{p}.ln1"), c);
        layer_norm(&mut out, &format!("{p}.ln2"), c);
        out.push(spec(format!("{p}.pw.weight"), &[c, c], xavier(c, c)));
        out.push(spec(format!("{p}.pw.bias"), &[c], Init::Zeros));
    }

    layer_norm(&mut out, "head.ln", d);
    linear(&mut out, "head.fc", d, cfg.embedding_dim);
    out
}

/// Named parameter tensors in layout order.
#[derive(Clone, Debug)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
    lookup: HashMap<String, usize>,
}

impl ParamStore {
    /// Fresh parameters for `cfg`. Each tensor draws from its own RNG stream
    /// keyed by parameter path, so values do not depend on layout order.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let entries = parameter_layout(cfg)
            .into_iter()
            .map(|s| {
                let mut rng = seeds::stream(seed, "param-init", fnv_path(&s.path));
                let value = match s.init {
                    Init::Xavier { fan_in, fan_out } => {
                        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                        Tensor::from_fn(&s.shape, |_| rng.gen_range(-limit..=limit))
                    }
                    Init::Uniform { limit } => {
                        Tensor::from_fn(&s.shape, |_| rng.gen_range(-limit..=limit))
                    }
                    Init::Normal { std } => Tensor::from_fn(&s.shape, |_| {
                        // Box-Muller; two uniforms per draw.
                        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                        let u2: f64 = rng.gen_range(0.0..1.0);
                        std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                    }),
                    Init::Zeros => Tensor::zeros(&s.shape),
                    Init::Ones => Tensor::full(&s.shape, 1.0),
                };
                (s.path, value)
            })
            .collect();
        Ok(Self::from_entries(entries))
    }

    pub fn from_entries(entries: Vec<(String, Tensor)>) -> Self {
        let lookup = entries
            .iter()
            .enumerate()
            .map(|(i, (p, _))| (p.clone(), i))
            .collect();
        Self { entries, lookup }
    }

    /// Checks the store against a config's layout: same paths, same order,
    /// same shapes.
    pub fn verify_layout(&self, cfg: &ModelConfig) -> Result<()> {
        let layout = parameter_layout(cfg);
        if layout.len() != self.entries.len() {
            return Err(Error::Checkpoint(format!(
                "parameter count {} does not match config ({} expected)",
                self.entries.len(),
                layout.len()
            )));
        }
        for (spec, (path, tensor)) in layout.iter().zip(&self.entries) {
            if &spec.path != path {
                return Err(Error::Checkpoint(format!(
                    "parameter path mismatch: found '{}', config expects '{}'",
                    path, spec.path
                )));
            }
            if spec.shape != tensor.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter '{}' has shape {:?}, config expects {:?}",
                    path,
                    tensor.shape(),
                    spec.shape
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_elements(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(p, t)| (p.as_str(), t))
    }

    pub fn get(&self, path: &str) -> Option<&Tensor> {
        self.lookup.get(path).map(|&i| &self.entries[i].1)
    }

    pub fn tensor_at(&self, index: usize) -> &Tensor {
        &self.entries[index].1
    }

    pub fn path_at(&self, index: usize) -> &str {
        &self.entries[index].0
    }

    pub fn tensor_at_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.entries[index].1
    }
}

/// Stable per-path tag for seed derivation.
fn fnv_path(path: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in path.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Parameters bound into one graph as leaves, aligned to store order.
pub struct BoundParams {
    ids: Vec<NodeId>,
    lookup: HashMap<String, NodeId>,
}

impl BoundParams {
    /// Binds every parameter as a leaf of `g`. Tensor buffers are shared,
    /// not copied. `trainable` controls whether gradients flow to them.
    pub fn bind(g: &mut Graph, store: &ParamStore, trainable: bool) -> Self {
        let mut ids = Vec::with_capacity(store.len());
        let mut lookup = HashMap::with_capacity(store.len());
        for (path, tensor) in store.iter() {
            let id = g.leaf(tensor.clone(), trainable);
            ids.push(id);
            lookup.insert(path.to_string(), id);
        }
        Self { ids, lookup }
    }

    /// Wraps already-created leaves. Used where the caller owns leaf
    /// creation, e.g. gradient checking against explicit input nodes.
    pub fn from_pairs(pairs: Vec<(String, NodeId)>) -> Self {
        let ids = pairs.iter().map(|&(_, id)| id).collect();
        let lookup = pairs.into_iter().collect();
        Self { ids, lookup }
    }

    /// Node for a parameter path. Panics on unknown paths: callers derive
    /// paths from the same layout that built the store.
    pub fn get(&self, path: &str) -> NodeId {
        *self
            .lookup
            .get(path)
            .unwrap_or_else(|| panic!("parameter '{}' not bound", path))
    }

    /// Nodes in store order, for gradient collection.
    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_paths_are_unique_and_shapes_positive() {
        for variant in [Variant::GaitMixer, Variant::GaitFormer] {
            let cfg = ModelConfig {
                variant,
                ..Default::default()
            };
            let layout = parameter_layout(&cfg);
            let mut seen = std::collections::HashSet::new();
            for s in &layout {
                assert!(seen.insert(s.path.clone()), "duplicate path {}", s.path);
                assert!(s.shape.iter().all(|&d| d > 0));
            }
        }
    }

    #[test]
    fn variants_differ_in_temporal_stage_only() {
        let mixer = parameter_layout(&ModelConfig::default());
        let former = parameter_layout(&ModelConfig {
            variant: Variant::GaitFormer,
            ..Default::default()
        });
        let spatial_m: Vec<_> = mixer.iter().filter(|s| s.path.starts_with("spatial")).collect();
        let spatial_f: Vec<_> = former.iter().filter(|s| s.path.starts_with("spatial")).collect();
        assert_eq!(spatial_m.len(), spatial_f.len());
        assert!(mixer.iter().any(|s| s.path.contains(".dw.")));
        assert!(!former.iter().any(|s| s.path.contains(".dw.")));
        assert!(former.iter().any(|s| s.path.contains("temporal.block0.attn")));
        assert!(former.iter().any(|s| s.path == "temporal.pos_embedding"));
    }

    #[test]
    fn init_is_deterministic_and_order_independent() {
        let cfg = ModelConfig {
            d_model: 16,
            heads: 2,
            spatial_blocks: 1,
            temporal_blocks: 1,
            joints: 3,
            frames: 8,
            kernel_size: 3,
            ..Default::default()
        };
        let a = ParamStore::init(&cfg, 42).unwrap();
        let b = ParamStore::init(&cfg, 42).unwrap();
        for ((pa, ta), (pb, tb)) in a.iter().zip(b.iter()) {
            assert_eq!(pa, pb);
            assert_eq!(ta.data(), tb.data());
        }
        let c = ParamStore::init(&cfg, 43).unwrap();
        let same = a
            .iter()
            .zip(c.iter())
            .filter(|((_, ta), (_, tc))| ta.data() == tc.data())
            .count();
        // Zeros/ones tensors match; weight tensors must not.
        assert!(same < a.len());
    }

    #[test]
    fn verify_layout_catches_mismatches() {
        let cfg = ModelConfig {
            d_model: 16,
            heads: 2,
            spatial_blocks: 1,
            temporal_blocks: 1,
            joints: 3,
            frames: 8,
            kernel_size: 3,
            ..Default::default()
        };
        let store = ParamStore::init(&cfg, 1).unwrap();
        store.verify_layout(&cfg).unwrap();

        let other = ModelConfig {
            variant: Variant::GaitFormer,
            ..cfg.clone()
        };
        assert!(store.verify_layout(&other).is_err());

        let wider = ModelConfig {
            d_model: 32,
            ..cfg.clone()
        };
        assert!(store.verify_layout(&wider).is_err());
    }

    #[test]
    fn gamma_ones_beta_zeros() {
        let cfg = ModelConfig {
            d_model: 8,
            heads: 2,
            spatial_blocks: 1,
            temporal_blocks: 1,
            joints: 2,
            frames: 8,
            kernel_size: 3,
            ..Default::default()
        };
        let store = ParamStore::init(&cfg, 0).unwrap();
        let gamma = store.get("spatial.block0.ln1.gamma").unwrap();
        assert!(gamma.data().iter().all(|&v| v == 1.0));
        let beta = store.get("spatial.block0.ln1.beta").unwrap();
        assert!(beta.data().iter().all(|&v| v == 0.0));
    }
}
