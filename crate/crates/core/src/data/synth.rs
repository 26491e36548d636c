//! Synthetic gait generator.
//!
//! Each subject is a latent parameter vector (limb lengths, gait period,
//! amplitudes, phase quirks) driving a 17-joint kinematic oscillator in
//! pixel space. Sequences of one subject share the latent and differ in
//! phase and observation noise; conditions perturb the dynamics (BG pins one
//! arm, CL damps amplitudes and widens the torso); views apply an x scale
//! plus shear. Latents are rejection-sampled to a minimum pairwise distance
//! so identities stay separable by construction.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;

use super::manifest::{write_manifest, ManifestRecord};
use super::sequence::{write_sequence, Condition, SkeletonSequence, JOINT_COUNT};

/// CASIA-B camera angles, degrees.
pub const VIEW_ANGLES: [u16; 11] = [0, 18, 36, 54, 72, 90, 108, 126, 144, 162, 180];

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub subjects: usize,
    /// Sequences per subject and condition.
    pub nm_seqs: usize,
    pub bg_seqs: usize,
    pub cl_seqs: usize,
    /// Frames per sequence; must cover at least one model window.
    pub frames: usize,
    /// Observation noise, pixels.
    pub noise_px: f64,
    /// Minimum pairwise distance between normalized latent vectors.
    pub min_separation: f64,
    /// Gait cycle period range, frames.
    pub period_min: f64,
    pub period_max: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            subjects: 20,
            nm_seqs: 6,
            bg_seqs: 2,
            cl_seqs: 2,
            frames: 90,
            noise_px: 1.0,
            min_separation: 0.5,
            period_min: 12.0,
            period_max: 18.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.subjects < 2 {
            return Err(Error::Config("synth needs at least 2 subjects".into()));
        }
        if self.nm_seqs == 0 {
            return Err(Error::Config("synth needs at least one NM sequence".into()));
        }
        if self.frames < 60 {
            return Err(Error::Config(format!(
                "synth frames {} below the 60-frame model window",
                self.frames
            )));
        }
        if !(self.period_min >= 4.0 && self.period_max >= self.period_min) {
            return Err(Error::Config(format!(
                "bad period range [{}, {}]",
                self.period_min, self.period_max
            )));
        }
        if self.noise_px < 0.0 || self.min_separation < 0.0 {
            return Err(Error::Config("noise and separation must be >= 0".into()));
        }
        Ok(())
    }

    pub fn seqs_per_subject(&self) -> usize {
        self.nm_seqs + self.bg_seqs + self.cl_seqs
    }
}

/// Per-subject gait identity. Lengths in pixels, amplitudes in radians.
#[derive(Clone, Debug, PartialEq)]
pub struct SubjectLatent {
    pub torso: f64,
    pub shoulder_w: f64,
    pub hip_w: f64,
    pub head: f64,
    pub leg_upper: f64,
    pub leg_lower: f64,
    pub arm_upper: f64,
    pub arm_lower: f64,
    pub period: f64,
    pub hip_amp: f64,
    pub knee_amp: f64,
    pub arm_amp: f64,
    pub arm_lag: f64,
    pub bounce: f64,
    pub knee_phase: f64,
    pub stance_x: f64,
}

/// (low, high) sampling bounds for each latent field, in declaration order.
/// Also the normalization used by [`SubjectLatent::vector`].
const LATENT_BOUNDS: [(f64, f64); 16] = [
    (45.0, 60.0), // torso
    (26.0, 38.0), // shoulder_w
    (20.0, 30.0), // hip_w
    (16.0, 24.0), // head
    (34.0, 44.0), // leg_upper
    (32.0, 42.0), // leg_lower
    (24.0, 32.0), // arm_upper
    (20.0, 28.0), // arm_lower
    (12.0, 18.0), // period (overridden by spec range)
    (0.45, 0.75), // hip_amp
    (0.5, 0.9),   // knee_amp
    (0.35, 0.65), // arm_amp
    (-0.25, 0.25), // arm_lag
    (1.5, 4.0),   // bounce
    (0.3, 0.7),   // knee_phase
    (-4.0, 4.0),  // stance_x
];

impl SubjectLatent {
    pub fn sample(rng: &mut ChaCha8Rng, period_range: (f64, f64)) -> Self {
        let mut v = [0.0; 16];
        for (i, (lo, hi)) in LATENT_BOUNDS.iter().enumerate() {
            let (lo, hi) = if i == 8 { period_range } else { (*lo, *hi) };
            v[i] = rng.gen_range(lo..=hi);
        }
        Self {
            torso: v[0],
            shoulder_w: v[1],
            hip_w: v[2],
            head: v[3],
            leg_upper: v[4],
            leg_lower: v[5],
            arm_upper: v[6],
            arm_lower: v[7],
            period: v[8],
            hip_amp: v[9],
            knee_amp: v[10],
            arm_amp: v[11],
            arm_lag: v[12],
            bounce: v[13],
            knee_phase: v[14],
            stance_x: v[15],
        }
    }

    /// Latent coordinates scaled to the unit box, for separation distances.
    pub fn vector(&self) -> [f64; 16] {
        let raw = [
            self.torso,
            self.shoulder_w,
            self.hip_w,
            self.head,
            self.leg_upper,
            self.leg_lower,
            self.arm_upper,
            self.arm_lower,
            self.period,
            self.hip_amp,
            self.knee_amp,
            self.arm_amp,
            self.arm_lag,
            self.bounce,
            self.knee_phase,
            self.stance_x,
        ];
        let mut out = [0.0; 16];
        for (i, ((lo, hi), v)) in LATENT_BOUNDS.iter().zip(raw).enumerate() {
            out[i] = (v - lo) / (hi - lo);
        }
        out
    }

    pub fn distance(&self, other: &SubjectLatent) -> f64 {
        self.vector()
            .iter()
            .zip(other.vector())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Rejection-samples `spec.subjects` latents with pairwise distance at least
/// `spec.min_separation`.
pub fn sample_latents(spec: &SynthSpec, master_seed: u64) -> Result<Vec<SubjectLatent>> {
    spec.validate()?;
    let mut rng = seeds::stream(master_seed, "synth-latents", 0);
    let mut out: Vec<SubjectLatent> = Vec::with_capacity(spec.subjects);
    let mut attempts = 0usize;
    while out.len() < spec.subjects {
        let cand = SubjectLatent::sample(&mut rng, (spec.period_min, spec.period_max));
        attempts += 1;
        if attempts > 1000 * spec.subjects {
            return Err(Error::Config(format!(
                "could not draw {} latents with separation {}; lower min_separation",
                spec.subjects, spec.min_separation
            )));
        }
        if out.iter().all(|l| l.distance(&cand) >= spec.min_separation) {
            out.push(cand);
        }
    }
    Ok(out)
}

const CENTER_X: f64 = 160.0;
const CENTER_Y: f64 = 120.0;
const PELVIS_Y: f64 = 130.0;

/// Renders one sequence's keypoint buffer: `frames * 17 * 2` pixel values.
/// `phase` offsets the gait cycle; `noise` draws observation noise (pass a
/// zero `noise_px` for clean trajectories).
pub fn render_sequence(
    latent: &SubjectLatent,
    condition: Condition,
    view_deg: u16,
    frames: usize,
    phase: f64,
    noise_px: f64,
    noise: &mut ChaCha8Rng,
) -> Vec<f64> {
    // Condition-dependent dynamics.
    let (amp_scale, width_scale, lean) = match condition {
        Condition::Nm => (1.0, 1.0, 0.0),
        Condition::Bg => (1.0, 1.0, 4.0),
        Condition::Cl => (0.65, 1.18, 0.0),
    };
    let hip_amp = latent.hip_amp * if condition == Condition::Cl { 0.7 } else { 1.0 };
    let knee_amp = latent.knee_amp * amp_scale;
    // BG pins the carrying (left) arm.
    let (arm_l, arm_r, bend_l_fixed) = match condition {
        Condition::Bg => (latent.arm_amp * 0.12, latent.arm_amp, Some(1.1)),
        _ => (latent.arm_amp * amp_scale, latent.arm_amp * amp_scale, None),
    };
    let shoulder_w = latent.shoulder_w * width_scale;
    let hip_w = latent.hip_w * width_scale;

    // View projection: x scale plus shear about the frame center.
    let v = (view_deg as f64).to_radians();
    let sx = 0.3 + 0.7 * v.cos();
    let sh = 0.2 * v.sin();

    let mut out = Vec::with_capacity(frames * JOINT_COUNT * 2);
    let mut joints = [(0.0f64, 0.0f64); JOINT_COUNT];
    for t in 0..frames {
        let phi = 2.0 * PI * (t as f64 + phase) / latent.period;

        let pelvis_x = CENTER_X + latent.stance_x;
        let pelvis_y = PELVIS_Y - latent.bounce * (2.0 * phi).cos();
        let sc_x = pelvis_x + lean;
        let sc_y = pelvis_y - latent.torso;

        let head_s = latent.head / 20.0;
        let nose = (sc_x, sc_y - latent.head);
        joints[0] = nose;
        joints[1] = (nose.0 + 3.2 * head_s, nose.1 - 1.6 * head_s);
        joints[2] = (nose.0 - 3.2 * head_s, nose.1 - 1.6 * head_s);
        joints[3] = (nose.0 + 5.5 * head_s, nose.1 + 0.8 * head_s);
        joints[4] = (nose.0 - 5.5 * head_s, nose.1 + 0.8 * head_s);

        let l_sh = (sc_x + shoulder_w / 2.0, sc_y);
        let r_sh = (sc_x - shoulder_w / 2.0, sc_y);
        joints[5] = l_sh;
        joints[6] = r_sh;

        // Arms counter-swing the same-side leg.
        let alpha_l = arm_l * (phi + PI + latent.arm_lag).sin();
        let alpha_r = arm_r * (phi + latent.arm_lag).sin();
        let bend_l = bend_l_fixed.unwrap_or(0.35 + 0.25 * (phi + PI).sin());
        let bend_r = 0.35 + 0.25 * phi.sin();
        let l_el = (
            l_sh.0 + latent.arm_upper * alpha_l.sin(),
            l_sh.1 + latent.arm_upper * alpha_l.cos(),
        );
        let r_el = (
            r_sh.0 + latent.arm_upper * alpha_r.sin(),
            r_sh.1 + latent.arm_upper * alpha_r.cos(),
        );
        joints[7] = l_el;
        joints[8] = r_el;
        joints[9] = (
            l_el.0 + latent.arm_lower * (alpha_l + bend_l).sin(),
            l_el.1 + latent.arm_lower * (alpha_l + bend_l).cos(),
        );
        joints[10] = (
            r_el.0 + latent.arm_lower * (alpha_r + bend_r).sin(),
            r_el.1 + latent.arm_lower * (alpha_r + bend_r).cos(),
        );

        let l_hip = (pelvis_x + hip_w / 2.0, pelvis_y);
        let r_hip = (pelvis_x - hip_w / 2.0, pelvis_y);
        joints[11] = l_hip;
        joints[12] = r_hip;

        // Thigh swing at the fundamental; knee flexes once per cycle.
        let th_l = hip_amp * phi.sin();
        let th_r = hip_amp * (phi + PI).sin();
        let k_l = knee_amp * (0.5 - 0.5 * (phi - latent.knee_phase).cos());
        let k_r = knee_amp * (0.5 - 0.5 * (phi + PI - latent.knee_phase).cos());
        let l_knee = (
            l_hip.0 + latent.leg_upper * th_l.sin(),
            l_hip.1 + latent.leg_upper * th_l.cos(),
        );
        let r_knee = (
            r_hip.0 + latent.leg_upper * th_r.sin(),
            r_hip.1 + latent.leg_upper * th_r.cos(),
        );
        joints[13] = l_knee;
        joints[14] = r_knee;
        joints[15] = (
            l_knee.0 + latent.leg_lower * (th_l - k_l).sin(),
            l_knee.1 + latent.leg_lower * (th_l - k_l).cos(),
        );
        joints[16] = (
            r_knee.0 + latent.leg_lower * (th_r - k_r).sin(),
            r_knee.1 + latent.leg_lower * (th_r - k_r).cos(),
        );

        for &(x, y) in &joints {
            let px = CENTER_X + (x - CENTER_X) * sx + sh * (y - CENTER_Y);
            let (nx, ny) = if noise_px > 0.0 {
                (px + gaussian(noise) * noise_px, y + gaussian(noise) * noise_px)
            } else {
                (px, y)
            };
            out.push(nx);
            out.push(ny);
        }
    }
    out
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// All sequences of a dataset, in manifest order. Deterministic in
/// (spec, master_seed).
pub fn generate_dataset(spec: &SynthSpec, master_seed: u64) -> Result<Vec<SkeletonSequence>> {
    let latents = sample_latents(spec, master_seed)?;
    let mut out = Vec::with_capacity(spec.subjects * spec.seqs_per_subject());
    for (si, latent) in latents.iter().enumerate() {
        let subject = format!("{:03}", si + 1);
        let mut running = 0usize;
        for (condition, count) in [
            (Condition::Nm, spec.nm_seqs),
            (Condition::Bg, spec.bg_seqs),
            (Condition::Cl, spec.cl_seqs),
        ] {
            for seq_index in 1..=count as u32 {
                let view = VIEW_ANGLES[(si + 3 * running) % VIEW_ANGLES.len()];
                let mut rng = seeds::stream(
                    master_seed,
                    "synth-seq",
                    (si as u64) * 10_000 + condition_code(condition) * 100 + seq_index as u64,
                );
                let phase = rng.gen_range(0.0..latent.period);
                let keypoints = render_sequence(
                    latent,
                    condition,
                    view,
                    spec.frames,
                    phase,
                    spec.noise_px,
                    &mut rng,
                );
                out.push(SkeletonSequence::new(
                    keypoints,
                    subject.clone(),
                    condition,
                    view,
                    seq_index,
                )?);
                running += 1;
            }
        }
    }
    Ok(out)
}

fn condition_code(c: Condition) -> u64 {
    match c {
        Condition::Nm => 0,
        Condition::Bg => 1,
        Condition::Cl => 2,
    }
}

/// Writes a dataset directory: one JSON file per sequence plus
/// `manifest.jsonl`. Returns the manifest path and records.
pub fn write_dataset(
    dir: &Path,
    spec: &SynthSpec,
    master_seed: u64,
) -> Result<(PathBuf, Vec<ManifestRecord>)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let sequences = generate_dataset(spec, master_seed)?;
    let mut records = Vec::with_capacity(sequences.len());
    for seq in &sequences {
        let name = format!(
            "{}-{}-{:02}-{:03}.json",
            seq.subject, seq.condition, seq.seq_index, seq.view_deg
        );
        write_sequence(&dir.join(&name), seq)?;
        records.push(ManifestRecord {
            path: name,
            subject: seq.subject.clone(),
            condition: seq.condition,
            view_deg: seq.view_deg,
            seq_index: seq.seq_index,
        });
    }
    let manifest_path = dir.join("manifest.jsonl");
    write_manifest(&manifest_path, &records)?;
    Ok((manifest_path, records))
}
