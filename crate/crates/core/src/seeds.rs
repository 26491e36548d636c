//! Deterministic RNG stream derivation.
//!
//! Every random decision in the pipeline draws from a stream keyed by
//! (master seed, domain label, index). Streams are independent of execution
//! order and of each other, so resuming a run at step `n` reproduces the
//! exact trajectory without serializing generator state.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a hash of a label, used as a domain tag.
fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// SplitMix64 finalizer; decorrelates nearby inputs.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// 64-bit seed for the stream `(master, domain, index)`.
pub fn derive(master: u64, domain: &str, index: u64) -> u64 {
    splitmix(splitmix(master ^ fnv1a(domain)).wrapping_add(index))
}

/// Generator for the stream `(master, domain, index)`.
pub fn stream(master: u64, domain: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, domain, index))
}
