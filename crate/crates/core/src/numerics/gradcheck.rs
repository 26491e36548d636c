//! Finite-difference gradient checking.
//!
//! The harness is the independent oracle for every backward formula in this
//! crate: it compares tape gradients against central differences of a
//! freshly rebuilt forward pass, so the two paths share no derivative code.

use crate::error::{Error, Result};

use super::graph::{GraphBase, NodeId};
use super::tensor::TensorBase;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckSettings {
    /// Central-difference step.
    pub step: f64,
    /// Maximum allowed relative error, with |err| scaled by
    /// `max(1, |analytic|, |numeric|)`.
    pub tolerance: f64,
}

impl Default for GradCheckSettings {
    fn default() -> Self {
        Self {
            step: 1e-4,
            tolerance: 1e-4,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// (input index, element index) where the worst error occurred.
    pub worst: (usize, usize),
    pub checked: usize,
}

impl GradCheckReport {
    pub fn assert_within(&self, settings: &GradCheckSettings) {
        assert!(
            self.max_rel_err < settings.tolerance,
            "gradient check failed: rel err {:.3e} at input {} element {} (checked {})",
            self.max_rel_err,
            self.worst.0,
            self.worst.1,
            self.checked
        );
    }
}

/// Checks every element of every input. `build` must be a pure function of
/// the leaf values: it is re-invoked for each perturbed evaluation.
pub fn check_gradients<F>(
    inputs: &[TensorBase<f64>],
    settings: &GradCheckSettings,
    build: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut GraphBase<f64>, &[NodeId]) -> Result<NodeId>,
{
    let probes: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..t.numel()).map(move |e| (i, e)))
        .collect();
    check_gradients_probed(inputs, &probes, settings, build)
}

/// Checks only the listed (input, element) pairs; used where inputs are too
/// large to probe exhaustively. Analytic gradients still come from a single
/// full backward pass.
pub fn check_gradients_probed<F>(
    inputs: &[TensorBase<f64>],
    probes: &[(usize, usize)],
    settings: &GradCheckSettings,
    build: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut GraphBase<f64>, &[NodeId]) -> Result<NodeId>,
{
    let analytic = {
        let mut g = GraphBase::new();
        let ids: Vec<NodeId> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
        let loss = build(&mut g, &ids)?;
        if g.value(loss).numel() != 1 {
            return Err(Error::Contract(
                "gradient check requires a scalar loss".into(),
            ));
        }
        if !g.value(loss).is_finite() {
            return Err(Error::Numeric("non-finite loss in gradient check".into()));
        }
        g.backward(loss)?;
        let grads: Vec<Vec<f64>> = ids
            .iter()
            .zip(inputs)
            .map(|(&id, t)| {
                g.grad(id)
                    .map(|s| s.to_vec())
                    .unwrap_or_else(|| vec![0.0; t.numel()])
            })
            .collect();
        grads
    };

    let eval = |perturbed: &[TensorBase<f64>]| -> Result<f64> {
        let mut g = GraphBase::new();
        let ids: Vec<NodeId> = perturbed.iter().map(|t| g.leaf(t.clone(), true)).collect();
        let loss = build(&mut g, &ids)?;
        Ok(g.value(loss).data()[0])
    };

    let h = settings.step;
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    let mut work: Vec<TensorBase<f64>> = inputs.to_vec();
    for &(i, e) in probes {
        if i >= inputs.len() || e >= inputs[i].numel() {
            return Err(Error::Contract(format!(
                "gradient check probe ({}, {}) out of range",
                i, e
            )));
        }
        let base = inputs[i].data()[e];

        let mut plus = inputs[i].data().to_vec();
        plus[e] = base + h;
        work[i] = TensorBase::new(inputs[i].shape().to_vec(), plus)?;
        let f_plus = eval(&work)?;

        let mut minus = inputs[i].data().to_vec();
        minus[e] = base - h;
        work[i] = TensorBase::new(inputs[i].shape().to_vec(), minus)?;
        let f_minus = eval(&work)?;

        work[i] = inputs[i].clone();

        let numeric = (f_plus - f_minus) / (2.0 * h);
        let a = analytic[i][e];
        let rel = (a - numeric).abs() / 1.0_f64.max(a.abs()).max(numeric.abs());
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst = (i, e);
        }
        report.checked += 1;
    }
    Ok(report)
}
