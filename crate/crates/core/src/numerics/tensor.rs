//! Dense row-major tensor value.

use std::sync::Arc;

use crate::error::{Error, Result};

use super::scalar::Scalar;

/// Immutable dense tensor: a shape and a shared row-major buffer.
///
/// Cloning is cheap (buffer is reference-counted), and reshapes alias the
/// same buffer. Rank-0 tensors (empty shape, one element) represent scalars.
#[derive(Clone, Debug)]
pub struct TensorBase<S> {
    shape: Vec<usize>,
    data: Arc<Vec<S>>,
}

impl<S: Scalar> TensorBase<S> {
    /// Builds a tensor, checking that `data` matches the shape's element count.
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if data.len() != numel {
            return Err(Error::Contract(format!(
                "tensor data length {} does not match shape {:?} ({} elements)",
                data.len(),
                shape,
                numel
            )));
        }
        Ok(Self {
            shape,
            data: Arc::new(data),
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: Arc::new(vec![S::zero(); numel]),
        }
    }

    pub fn full(shape: &[usize], value: S) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: Arc::new(vec![value; numel]),
        }
    }

    /// Rank-0 scalar tensor.
    pub fn scalar(value: S) -> Self {
        Self {
            shape: Vec::new(),
            data: Arc::new(vec![value]),
        }
    }

    /// Builds a tensor by evaluating `f` at every index, row-major order.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> S) -> Self {
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..numel {
            data.push(f(&idx));
            advance_index(&mut idx, shape);
        }
        Self {
            shape: shape.to_vec(),
            data: Arc::new(data),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub(crate) fn data_arc(&self) -> Arc<Vec<S>> {
        Arc::clone(&self.data)
    }

    /// Mutable view of the buffer, copy-on-write if it is shared (e.g. still
    /// referenced by a live graph).
    pub fn data_mut(&mut self) -> &mut [S] {
        Arc::<Vec<S>>::make_mut(&mut self.data).as_mut_slice()
    }

    /// Element at a multi-dimensional index. Intended for tests and small
    /// bookkeeping, not inner loops.
    pub fn at(&self, index: &[usize]) -> S {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        let mut flat = 0usize;
        for (d, (&i, &n)) in index.iter().zip(&self.shape).enumerate() {
            assert!(i < n, "index {} out of bounds at axis {}", i, d);
            flat = flat * n + i;
        }
        self.data[flat]
    }

    /// Row-major strides of the current shape.
    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    /// Same buffer under a new shape with identical element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: Arc::clone(&self.data),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Row-major strides for a shape.
pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        strides[d] = strides[d + 1] * shape[d + 1];
    }
    strides
}

/// Advances a row-major index in place (wrapping to all zeros at the end).
pub(crate) fn advance_index(idx: &mut [usize], shape: &[usize]) {
    for d in (0..shape.len()).rev() {
        idx[d] += 1;
        if idx[d] < shape[d] {
            return;
        }
        idx[d] = 0;
    }
}

/// NumPy-style broadcast of two shapes, or an error naming the operation.
pub(crate) fn broadcast_shapes(
    op: &'static str,
    lhs: &[usize],
    rhs: &[usize],
) -> Result<Vec<usize>> {
    let rank = lhs.len().max(rhs.len());
    let mut out = vec![0usize; rank];
    for d in 0..rank {
        let a = dim_from_right(lhs, rank, d);
        let b = dim_from_right(rhs, rank, d);
        out[d] = if a == b {
            a
        } else if a == 1 {
            b
        } else if b == 1 {
            a
        } else {
            return Err(Error::ShapeMismatch {
                op,
                lhs: lhs.to_vec(),
                rhs: rhs.to_vec(),
            });
        };
    }
    Ok(out)
}

/// Dimension `d` of `shape` when right-aligned to `rank`, padding with 1s.
fn dim_from_right(shape: &[usize], rank: usize, d: usize) -> usize {
    let offset = rank - shape.len();
    if d < offset {
        1
    } else {
        shape[d - offset]
    }
}

/// Strides for reading `shape` as if broadcast to `out_shape`
/// (stride 0 on broadcast axes, right-aligned).
pub(crate) fn broadcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let own = strides_of(shape);
    let offset = out_shape.len() - shape.len();
    let mut out = vec![0usize; out_shape.len()];
    for d in 0..shape.len() {
        out[offset + d] = if shape[d] == 1 { 0 } else { own[d] };
    }
    out
}
