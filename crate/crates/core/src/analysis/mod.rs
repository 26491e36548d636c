//! Post-hoc diagnostics over trained models: 2D spectra of intermediate
//! feature maps, gradient-weighted joint-frame attribution, and heatmap
//! rendering with exact numeric sidecars.

mod fft;
mod gradcam;
mod render;

pub use fft::{
    fft2_magnitude, fftshift, high_freq_fraction, joint_time_map, log1p_scale,
    select_channels_by_variance, spectrum_of_channel, SpectrumMap,
};
pub use gradcam::{attribution_from, grad_cam, AttributionMap};
pub use render::{encode_heatmap, read_sidecar, render_heatmap, HeatmapSidecar};

use crate::error::Result;
use crate::model::{forward, BoundParams, ModelConfig, ParamStore};
use crate::{Graph, Tensor};

/// Runs a window forward and returns the value at a named hook (defaulting
/// to the final temporal block when `layer` is None) plus the hook's name.
pub fn feature_map_at(
    store: &ParamStore,
    cfg: &ModelConfig,
    window: &Tensor,
    layer: Option<&str>,
) -> Result<(String, Tensor)> {
    let mut g = Graph::new();
    let p = BoundParams::bind(&mut g, store, false);
    let input = g.constant(window.clone());
    let out = forward(&mut g, &p, cfg, input)?;
    let name = match layer {
        Some(l) => l.to_string(),
        None => format!("temporal.block{}.out", cfg.temporal_blocks - 1),
    };
    let id = out.hook(&name).ok_or_else(|| {
        crate::error::Error::Config(format!(
            "unknown layer {name:?}; valid hooks: {}",
            out.hook_names().join(", ")
        ))
    })?;
    Ok((name, g.value(id).clone()))
}

/// Mean high-frequency energy fraction of the final temporal feature map,
/// averaged over the `channels` highest-variance channels of each window.
/// This is the tracked spectral-width metric for comparing model variants.
pub fn mean_high_freq_fraction(
    store: &ParamStore,
    cfg: &ModelConfig,
    windows: &[Tensor],
    channels: usize,
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for window in windows {
        let (_, feature) = feature_map_at(store, cfg, window, None)?;
        for k in select_channels_by_variance(&feature, cfg.d_model, channels)? {
            let spec = spectrum_of_channel(&feature, cfg.d_model, k)?;
            total += high_freq_fraction(&spec.magnitude, spec.rows, spec.cols);
            count += 1;
        }
    }
    Ok(total / count.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_map_lookup_defaults_to_last_temporal_block() {
        let cfg = ModelConfig {
            frames: 60,
            d_model: 8,
            heads: 2,
            spatial_blocks: 1,
            temporal_blocks: 2,
            kernel_size: 7,
            mlp_ratio: 2.0,
            embedding_dim: 4,
            ..Default::default()
        };
        let store = ParamStore::init(&cfg, 1).unwrap();
        let window = Tensor::new(vec![60, 17, 2], vec![0.25; 60 * 17 * 2]).unwrap();
        let (name, feature) = feature_map_at(&store, &cfg, &window, None).unwrap();
        assert_eq!(name, "temporal.block1.out");
        assert_eq!(feature.shape(), &[17 * 8, 60]);
        assert!(feature_map_at(&store, &cfg, &window, Some("bogus")).is_err());

        let frac = mean_high_freq_fraction(&store, &cfg, &[window], 2).unwrap();
        assert!((0.0..=1.0).contains(&frac), "fraction {frac} out of range");
    }
}
