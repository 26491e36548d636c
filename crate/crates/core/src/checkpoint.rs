//! Binary checkpoint format.
//!
//! Layout: 8-byte magic `GMIXCKPT`, u32 format version, u32 metadata length,
//! JSON metadata, then raw little-endian f64 payloads in metadata order
//! (parameters first, then optional Adam moment buffers). The metadata
//! records the model config, training step, and every parameter path with
//! its shape, so a mismatched config is rejected before any payload is
//! touched. Round-trips are bit-exact: payload bytes are the in-memory f64
//! bits untouched.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ParamStore};
use crate::optim::{Adam, AdamConfig};
use crate::Tensor;

const MAGIC: &[u8; 8] = b"GMIXCKPT";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Meta {
    model: ModelConfig,
    /// Global training step at save time.
    step: u64,
    params: Vec<ParamMeta>,
    optimizer: Option<OptimMeta>,
}

#[derive(Serialize, Deserialize)]
struct ParamMeta {
    path: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct OptimMeta {
    adam: AdamConfig,
    steps_applied: u64,
}

/// Everything a checkpoint holds.
#[derive(Debug)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub step: u64,
    pub store: ParamStore,
    /// Present when the checkpoint was saved mid-training.
    pub optimizer: Option<Adam>,
}

pub fn save(
    path: &Path,
    model: &ModelConfig,
    step: u64,
    store: &ParamStore,
    optimizer: Option<&Adam>,
) -> Result<()> {
    store.verify_layout(model)?;
    let meta = Meta {
        model: model.clone(),
        step,
        params: store
            .iter()
            .map(|(p, t)| ParamMeta {
                path: p.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        optimizer: optimizer.map(|a| OptimMeta {
            adam: *a.config(),
            steps_applied: a.steps_applied(),
        }),
    };
    let meta_json = serde_json::to_vec(&meta).map_err(|e| Error::Checkpoint(e.to_string()))?;

    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut write = |bytes: &[u8]| file.write_all(bytes).map_err(|e| Error::io(path, e));
    write(MAGIC)?;
    write(&VERSION.to_le_bytes())?;
    write(&(meta_json.len() as u32).to_le_bytes())?;
    write(&meta_json)?;
    for (_, t) in store.iter() {
        write_f64s(&mut file, path, t.data())?;
    }
    if let Some(a) = optimizer {
        let (m, v) = a.moments();
        for buf in m.iter().chain(v) {
            write_f64s(&mut file, path, buf)?;
        }
    }
    Ok(())
}

fn write_f64s(file: &mut std::fs::File, path: &Path, values: &[f64]) -> Result<()> {
    // One buffer per tensor keeps writes coarse without holding the whole
    // payload twice.
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint and verifies it against `expect`, when given. A config
/// mismatch (different variant, dims, or parameter layout) is a hard error.
pub fn load(path: &Path, expect: Option<&ModelConfig>) -> Result<Checkpoint> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut header = [0u8; 16];
    file.read_exact(&mut header).map_err(|e| Error::io(path, e))?;
    if &header[..8] != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{}: not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let version = u32::from_le_bytes(header[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: format version {version}, this build reads {VERSION}",
            path.display()
        )));
    }
    let meta_len = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let mut meta_json = vec![0u8; meta_len];
    file.read_exact(&mut meta_json).map_err(|e| Error::io(path, e))?;
    let meta: Meta =
        serde_json::from_slice(&meta_json).map_err(|e| Error::Checkpoint(e.to_string()))?;

    let mut entries = Vec::with_capacity(meta.params.len());
    for pm in &meta.params {
        let numel: usize = pm.shape.iter().product();
        let values = read_f64s(&mut file, path, numel)?;
        entries.push((
            pm.path.clone(),
            Tensor::new(pm.shape.clone(), values)
                .map_err(|e| Error::Checkpoint(format!("{}: {e}", pm.path)))?,
        ));
    }
    let store = ParamStore::from_entries(entries);
    // The store must match its own recorded config; and the caller's, when
    // one is expected.
    store.verify_layout(&meta.model)?;
    if let Some(expect) = expect {
        store.verify_layout(expect).map_err(|e| {
            Error::Checkpoint(format!(
                "checkpoint was trained with a different model config: {e}"
            ))
        })?;
    }

    let optimizer = match &meta.optimizer {
        Some(om) => {
            let mut m = Vec::with_capacity(meta.params.len());
            let mut v = Vec::with_capacity(meta.params.len());
            for pm in &meta.params {
                m.push(read_f64s(&mut file, path, pm.shape.iter().product())?);
            }
            for pm in &meta.params {
                v.push(read_f64s(&mut file, path, pm.shape.iter().product())?);
            }
            Some(Adam::restore(om.adam, &store, m, v, om.steps_applied)?)
        }
        None => None,
    };

    let mut rest = [0u8; 1];
    match file.read(&mut rest) {
        Ok(0) => {}
        Ok(_) => {
            return Err(Error::Checkpoint(format!(
                "{}: trailing bytes after payload",
                path.display()
            )))
        }
        Err(e) => return Err(Error::io(path, e)),
    }

    Ok(Checkpoint {
        model: meta.model,
        step: meta.step,
        store,
        optimizer,
    })
}

fn read_f64s(file: &mut std::fs::File, path: &Path, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    file.read_exact(&mut bytes).map_err(|e| {
        Error::Checkpoint(format!("{}: payload truncated ({e})", path.display()))
    })?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Human-oriented summary for checkpoint inspection.
pub fn describe(ckpt: &Checkpoint) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "variant: {}\nstep: {}\nparameters: {} tensors, {} values\noptimizer: {}\n",
        ckpt.model.variant.name(),
        ckpt.step,
        ckpt.store.len(),
        ckpt.store.total_elements(),
        match &ckpt.optimizer {
            Some(a) => format!("adam, {} steps applied", a.steps_applied()),
            None => "none".into(),
        }
    ));
    out.push_str("tensors:\n");
    for (p, t) in ckpt.store.iter() {
        out.push_str(&format!("  {p} {:?}\n", t.shape()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;

    fn small_cfg() -> ModelConfig {
        ModelConfig {
            joints: 3,
            frames: 8,
            d_model: 8,
            heads: 2,
            spatial_blocks: 1,
            temporal_blocks: 1,
            kernel_size: 3,
            embedding_dim: 4,
            ..Default::default()
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let cfg = small_cfg();
        let store = ParamStore::init(&cfg, 77).unwrap();
        save(&path, &cfg, 123, &store, None).unwrap();
        let back = load(&path, Some(&cfg)).unwrap();
        assert_eq!(back.step, 123);
        assert!(back.optimizer.is_none());
        for ((pa, ta), (pb, tb)) in store.iter().zip(back.store.iter()) {
            assert_eq!(pa, pb);
            assert_eq!(ta.shape(), tb.shape());
            let bits_a: Vec<u64> = ta.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = tb.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn optimizer_state_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.ckpt");
        let cfg = small_cfg();
        let mut store = ParamStore::init(&cfg, 5).unwrap();
        let mut adam = Adam::new(AdamConfig::default(), &store).unwrap();
        let grads: Vec<Option<Vec<f64>>> = store
            .iter()
            .map(|(_, t)| Some((0..t.numel()).map(|e| (e as f64).sin() * 0.01).collect()))
            .collect();
        for _ in 0..3 {
            adam.step(&mut store, &grads, 1e-3).unwrap();
        }
        save(&path, &cfg, 3, &store, Some(&adam)).unwrap();
        let back = load(&path, Some(&cfg)).unwrap();
        let restored = back.optimizer.expect("optimizer saved");
        assert_eq!(restored.steps_applied(), 3);
        let (m0, v0) = adam.moments();
        let (m1, v1) = restored.moments();
        assert_eq!(m0, m1);
        assert_eq!(v0, v1);

        // Continuing from the restored state matches continuing in place.
        let mut store2 = back.store.clone();
        let mut adam2 = restored;
        let mut adam1 = adam;
        for _ in 0..2 {
            adam1.step(&mut store, &grads, 1e-3).unwrap();
            adam2.step(&mut store2, &grads, 1e-3).unwrap();
        }
        for ((_, ta), (_, tb)) in store.iter().zip(store2.iter()) {
            assert_eq!(ta.data(), tb.data());
        }
    }

    #[test]
    fn variant_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mixer.ckpt");
        let cfg = small_cfg();
        let store = ParamStore::init(&cfg, 1).unwrap();
        save(&path, &cfg, 0, &store, None).unwrap();
        let former = ModelConfig {
            variant: Variant::GaitFormer,
            ..cfg
        };
        let err = load(&path, Some(&former)).unwrap_err();
        assert!(err.to_string().contains("different model config"), "{err}");
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let cfg = small_cfg();
        let store = ParamStore::init(&cfg, 1).unwrap();
        save(&path, &cfg, 0, &store, None).unwrap();
        let wider = ModelConfig {
            d_model: 16,
            ..small_cfg()
        };
        assert!(load(&path, Some(&wider)).is_err());
        // Without an expectation the load succeeds on its own config.
        assert!(load(&path, None).is_ok());
    }

    #[test]
    fn garbage_and_truncation_are_clean_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"not a checkpoint at all").unwrap();
        assert!(load(&path, None).unwrap_err().to_string().contains("magic"));

        let good = dir.path().join("good.ckpt");
        let cfg = small_cfg();
        let store = ParamStore::init(&cfg, 1).unwrap();
        save(&good, &cfg, 0, &store, None).unwrap();
        let bytes = std::fs::read(&good).unwrap();
        let cut = dir.path().join("cut.ckpt");
        std::fs::write(&cut, &bytes[..bytes.len() - 16]).unwrap();
        let err = load(&cut, None).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");

        let padded = dir.path().join("padded.ckpt");
        let mut extended = bytes.clone();
        extended.extend_from_slice(&[0u8; 8]);
        std::fs::write(&padded, extended).unwrap();
        let err = load(&padded, None).unwrap_err();
        assert!(err.to_string().contains("trailing"), "{err}");
    }

    #[test]
    fn describe_mentions_variant_and_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let cfg = small_cfg();
        let store = ParamStore::init(&cfg, 1).unwrap();
        save(&path, &cfg, 42, &store, None).unwrap();
        let text = describe(&load(&path, None).unwrap());
        assert!(text.contains("gaitmixer"));
        assert!(text.contains("step: 42"));
        assert!(text.contains("head.fc.weight"));
    }
}
