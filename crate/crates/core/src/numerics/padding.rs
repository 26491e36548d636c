//! Temporal padding for 1-D convolutions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How out-of-range samples are synthesized at the sequence boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadMode {
    /// Out-of-range samples are zero.
    Zero,
    /// Mirror about the boundary sample, excluding it: `x[-1] -> x[1]`.
    Reflect,
    /// Repeat the boundary sample.
    Replicate,
}

/// Asymmetric padding amounts for one temporal axis.
///
/// `left` samples are prepended and `right` appended before the convolution
/// slides over the sequence. Lengths are validated against the kernel in
/// [`PaddingSpec::validate`], which enforces the length-preserving contract
/// `left + right == kernel - 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaddingSpec {
    pub mode: PadMode,
    pub left: usize,
    pub right: usize,
}

impl PaddingSpec {
    /// Causal-style layout: the whole deficit prepended, nothing appended.
    pub fn prepend(mode: PadMode, kernel: usize) -> Self {
        Self {
            mode,
            left: kernel - 1,
            right: 0,
        }
    }

    /// Centered layout for odd kernels: `(k-1)/2` on each side.
    pub fn symmetric(mode: PadMode, kernel: usize) -> Self {
        Self {
            mode,
            left: (kernel - 1) / 2,
            right: kernel / 2,
        }
    }

    /// Checks this spec against a kernel size and input length.
    ///
    /// Reflect padding reads up to `left` (resp. `right`) samples past the
    /// boundary sample, so each side must not exceed `len - 1`.
    pub fn validate(&self, kernel: usize, len: usize) -> Result<()> {
        if kernel == 0 {
            return Err(Error::Config("kernel size must be positive".into()));
        }
        if len == 0 {
            return Err(Error::Config("sequence length must be positive".into()));
        }
        if self.left + self.right + 1 != kernel {
            return Err(Error::Config(format!(
                "padding {}+{} with kernel {} does not preserve length",
                self.left, self.right, kernel
            )));
        }
        if self.mode == PadMode::Reflect && (self.left > len - 1 || self.right > len - 1) {
            return Err(Error::Config(format!(
                "reflect padding {}/{} exceeds sequence length {} minus one",
                self.left, self.right, len
            )));
        }
        Ok(())
    }

    /// Source index in `[0, len)` for padded position `q`, or `None` where
    /// zero padding synthesizes a zero.
    ///
    /// Padded positions run over `[0, len + left + right)`.
    pub(crate) fn source_index(&self, q: usize, len: usize) -> Option<usize> {
        let p = q as isize - self.left as isize;
        if p >= 0 && (p as usize) < len {
            return Some(p as usize);
        }
        match self.mode {
            PadMode::Zero => None,
            PadMode::Reflect => {
                if p < 0 {
                    Some((-p) as usize)
                } else {
                    Some(2 * len - 2 - p as usize)
                }
            }
            PadMode::Replicate => {
                if p < 0 {
                    Some(0)
                } else {
                    Some(len - 1)
                }
            }
        }
    }
}
