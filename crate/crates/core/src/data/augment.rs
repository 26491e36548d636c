//! Training-time augmentation of normalized sequences.
//!
//! Each transform fires with its own probability. Draw order is fixed (crop
//! choice, mirror, translation, noise) so a given RNG state always produces
//! the same sample.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::sequence::{GaitSample, SkeletonSequence, JOINT_COUNT, LR_SWAP};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentPolicy {
    /// Horizontal mirror: x -> 1 - x plus left/right joint swap.
    pub mirror_prob: f64,
    /// Random contiguous window instead of the center crop.
    pub random_crop_prob: f64,
    /// Whole-window translation, both offsets uniform in +-translate_max.
    pub translate_prob: f64,
    pub translate_max: f64,
    /// Per-coordinate Gaussian noise.
    pub noise_prob: f64,
    pub noise_std: f64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            mirror_prob: 0.5,
            random_crop_prob: 0.5,
            translate_prob: 0.3,
            translate_max: 0.05,
            noise_prob: 0.3,
            noise_std: 0.005,
        }
    }
}

impl AugmentPolicy {
    /// Policy under which `augment` is exactly `center_crop`.
    pub fn null() -> Self {
        Self {
            mirror_prob: 0.0,
            random_crop_prob: 0.0,
            translate_prob: 0.0,
            translate_max: 0.0,
            noise_prob: 0.0,
            noise_std: 0.0,
        }
    }
}

/// Cuts a `frames`-long window from a normalized sequence with the policy's
/// transforms applied. Training path only; evaluation uses `center_crop`.
pub fn augment(
    seq: &SkeletonSequence,
    frames: usize,
    policy: &AugmentPolicy,
    rng: &mut ChaCha8Rng,
) -> Result<GaitSample> {
    let take_random_crop = rng.gen_bool(policy.random_crop_prob);
    let do_mirror = rng.gen_bool(policy.mirror_prob);
    let do_translate = rng.gen_bool(policy.translate_prob);
    let do_noise = rng.gen_bool(policy.noise_prob);

    let mut sample = if take_random_crop && seq.frames() > frames {
        let start = rng.gen_range(0..=seq.frames() - frames);
        seq.crop(start, frames)?
    } else {
        seq.center_crop(frames)?
    };

    if do_mirror {
        mirror_in_place(sample.window_mut());
    }
    if do_translate {
        let dx = rng.gen_range(-policy.translate_max..=policy.translate_max);
        let dy = rng.gen_range(-policy.translate_max..=policy.translate_max);
        for pair in sample.window_mut().chunks_mut(2) {
            pair[0] += dx;
            pair[1] += dy;
        }
    }
    if do_noise && policy.noise_std > 0.0 {
        for v in sample.window_mut() {
            *v += gaussian(rng) * policy.noise_std;
        }
    }
    Ok(sample)
}

/// Horizontal mirror in normalized coordinates: x -> 1 - x, left/right
/// joints exchanged. Applying it twice restores the window.
pub fn mirror_in_place(window: &mut [f64]) {
    let per_frame = JOINT_COUNT * 2;
    debug_assert_eq!(window.len() % per_frame, 0);
    for frame in window.chunks_mut(per_frame) {
        let orig: Vec<f64> = frame.to_vec();
        for j in 0..JOINT_COUNT {
            let src = LR_SWAP[j];
            frame[j * 2] = 1.0 - orig[src * 2];
            frame[j * 2 + 1] = orig[src * 2 + 1];
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller, cosine branch.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
