//! Adam with decoupled weight decay and the one-cycle learning-rate
//! schedule.
//!
//! The optimizer walks the parameter store in layout order; gradient buffers
//! must align index-by-index. A step with any non-finite gradient is skipped
//! whole: no parameter moves, moments and step count stay put, and the
//! caller gets the offending parameter index to log.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightDecayMode {
    /// AdamW: `p -= lr * wd * p` before the Adam delta.
    Decoupled,
    /// Classic L2: `wd * p` added to the gradient.
    L2InGradient,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub decay_mode: WeightDecayMode,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
            decay_mode: WeightDecayMode::Decoupled,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config(format!(
                "betas ({}, {}) must lie in [0, 1)",
                self.beta1, self.beta2
            )));
        }
        if self.eps <= 0.0 || self.weight_decay < 0.0 {
            return Err(Error::Config(format!(
                "eps {} must be > 0 and weight decay {} >= 0",
                self.eps, self.weight_decay
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// Step skipped: the gradient of this parameter (layout index) had a
    /// non-finite entry.
    SkippedNonFinite { param_index: usize },
}

/// Adam state over one parameter store.
#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    /// Completed steps (bias-correction time).
    t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, store: &ParamStore) -> Result<Self> {
        cfg.validate()?;
        let m = store.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        let v = store.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        Ok(Self { cfg, m, v, t: 0 })
    }

    /// Rebuilds optimizer state (checkpoint restore). Buffer shapes must
    /// match the store.
    pub fn restore(
        cfg: AdamConfig,
        store: &ParamStore,
        m: Vec<Vec<f64>>,
        v: Vec<Vec<f64>>,
        t: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if m.len() != store.len() || v.len() != store.len() {
            return Err(Error::Checkpoint(format!(
                "optimizer buffers cover {} / {} parameters, store has {}",
                m.len(),
                v.len(),
                store.len()
            )));
        }
        for (i, (_, tensor)) in store.iter().enumerate() {
            if m[i].len() != tensor.numel() || v[i].len() != tensor.numel() {
                return Err(Error::Checkpoint(format!(
                    "optimizer buffer {i} does not match parameter size {}",
                    tensor.numel()
                )));
            }
        }
        Ok(Self { cfg, m, v, t })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    pub fn steps_applied(&self) -> u64 {
        self.t
    }

    /// (first moments, second moments) in layout order.
    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.m, &self.v)
    }

    /// One update over the whole store. `grads` aligns with layout order; a
    /// missing entry means zero gradient for that parameter.
    pub fn step(
        &mut self,
        store: &mut ParamStore,
        grads: &[Option<Vec<f64>>],
        lr: f64,
    ) -> Result<StepOutcome> {
        if grads.len() != store.len() {
            return Err(Error::Contract(format!(
                "{} gradient buffers for {} parameters",
                grads.len(),
                store.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if g.len() != store.tensor_at(i).numel() {
                    return Err(Error::Contract(format!(
                        "gradient {i} has {} values, parameter has {}",
                        g.len(),
                        store.tensor_at(i).numel()
                    )));
                }
                if g.iter().any(|v| !v.is_finite()) {
                    return Ok(StepOutcome::SkippedNonFinite { param_index: i });
                }
            }
        }

        self.t += 1;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        let wd = self.cfg.weight_decay;
        for i in 0..store.len() {
            let zero_len = store.tensor_at(i).numel();
            let data = store.tensor_at_mut(i).data_mut();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let empty;
            let g: &[f64] = match &grads[i] {
                Some(g) => g,
                None => {
                    empty = vec![0.0; zero_len];
                    &empty
                }
            };
            for e in 0..data.len() {
                let mut ge = g[e];
                if wd > 0.0 {
                    match self.cfg.decay_mode {
                        WeightDecayMode::Decoupled => data[e] -= lr * wd * data[e],
                        WeightDecayMode::L2InGradient => ge += wd * data[e],
                    }
                }
                m[e] = b1 * m[e] + (1.0 - b1) * ge;
                v[e] = b2 * v[e] + (1.0 - b2) * ge * ge;
                let m_hat = m[e] / bc1;
                let v_hat = v[e] / bc2;
                data[e] -= lr * m_hat / (v_hat.sqrt() + self.cfg.eps);
            }
        }
        Ok(StepOutcome::Applied)
    }
}

/// One-cycle schedule: cosine rise from `max_lr / start_div` to `max_lr`
/// over the warmup fraction, cosine fall to `max_lr / final_div` after.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OneCycle {
    pub max_lr: f64,
    pub total_steps: usize,
    pub pct_warmup: f64,
    pub start_div: f64,
    pub final_div: f64,
}

impl Default for OneCycle {
    fn default() -> Self {
        Self {
            max_lr: 6e-3,
            total_steps: 1000,
            pct_warmup: 0.3,
            start_div: 25.0,
            final_div: 1e4,
        }
    }
}

impl OneCycle {
    pub fn validate(&self) -> Result<()> {
        if self.max_lr <= 0.0 {
            return Err(Error::Config(format!("max_lr {} must be > 0", self.max_lr)));
        }
        if self.total_steps < 2 {
            return Err(Error::Config("schedule needs at least 2 steps".into()));
        }
        if !(self.pct_warmup > 0.0 && self.pct_warmup < 1.0) {
            return Err(Error::Config(format!(
                "pct_warmup {} must lie strictly inside (0, 1)",
                self.pct_warmup
            )));
        }
        if self.start_div < 1.0 || self.final_div < 1.0 {
            return Err(Error::Config("lr divisors must be >= 1".into()));
        }
        Ok(())
    }

    fn warmup_steps(&self) -> usize {
        let w = (self.pct_warmup * self.total_steps as f64).round() as usize;
        w.clamp(1, self.total_steps - 1)
    }

    /// Learning rate for `step`; out-of-range steps clamp to the endpoints.
    pub fn lr_at(&self, step: usize) -> f64 {
        let start = self.max_lr / self.start_div;
        let fin = self.max_lr / self.final_div;
        let w = self.warmup_steps();
        if step >= self.total_steps {
            return fin;
        }
        if step <= w {
            let t = step as f64 / w as f64;
            start + (self.max_lr - start) * 0.5 * (1.0 - (std::f64::consts::PI * t).cos())
        } else {
            let t = (step - w) as f64 / (self.total_steps - w) as f64;
            fin + (self.max_lr - fin) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
        }
    }
}
