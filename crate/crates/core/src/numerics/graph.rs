//! Tape-based reverse-mode autodiff.
//!
//! A [`GraphBase`] owns an append-only arena of nodes. Recording an op
//! computes its value eagerly and stores the operands' [`NodeId`]s, so the
//! arena order is a topological order for free. `backward` (or
//! `backward_seeded`) sweeps the tape once in reverse, accumulating
//! gradients; shared subexpressions therefore receive the sum of their
//! downstream contributions. A graph can run backward once; after that the
//! per-node gradients stay readable until the graph is dropped.


use crate::error::{Error, Result};

use super::kernels::{mm_nn, mm_nt, mm_tn};
use super::padding::PaddingSpec;
use super::scalar::Scalar;
use super::tensor::{broadcast_shapes, broadcast_strides, strides_of, TensorBase};

/// Epsilon added to vector norms before dividing (l2-normalize, cosine).
const NORM_GUARD: f64 = 1e-12;

/// Handle to a node in one specific graph. Using it with a different graph
/// is a logic error and panics on the out-of-range index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<S> {
    Leaf,
    Add {
        a: NodeId,
        b: NodeId,
    },
    Mul {
        a: NodeId,
        b: NodeId,
    },
    Scale {
        a: NodeId,
        c: S,
    },
    MatMul {
        a: NodeId,
        b: NodeId,
    },
    Softmax {
        a: NodeId,
        axis: usize,
    },
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        axis: usize,
        eps: S,
    },
    Gelu {
        a: NodeId,
    },
    Relu {
        a: NodeId,
    },
    DepthwiseConv1d {
        x: NodeId,
        kernels: NodeId,
        pad: PaddingSpec,
    },
    PointwiseConv {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
    },
    MeanAxes {
        a: NodeId,
        axes: Vec<usize>,
    },
    SumAll {
        a: NodeId,
    },
    Concat {
        inputs: Vec<NodeId>,
        axis: usize,
    },
    Transpose {
        a: NodeId,
        perm: Vec<usize>,
    },
    Reshape {
        a: NodeId,
    },
    L2Normalize {
        a: NodeId,
        axis: usize,
    },
    CosineSim {
        a: NodeId,
        b: NodeId,
    },
}

struct Node<S: Scalar> {
    value: TensorBase<S>,
    grad: Option<Vec<S>>,
    /// For a leaf: whether it was created with `requires_grad`. For an op:
    /// true when any ancestor requires a gradient. Backward skips subtrees
    /// where it is false.
    needs_grad: bool,
    op: Op<S>,
}

pub struct GraphBase<S: Scalar> {
    nodes: Vec<Node<S>>,
    backward_done: bool,
}

impl<S: Scalar> Default for GraphBase<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> GraphBase<S> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            backward_done: false,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Inserts an input node. `requires_grad` marks it as a gradient target.
    pub fn leaf(&mut self, value: TensorBase<S>, requires_grad: bool) -> NodeId {
        self.push(value, requires_grad, Op::Leaf)
    }

    /// Inserts an input node that never receives a gradient.
    pub fn constant(&mut self, value: TensorBase<S>) -> NodeId {
        self.leaf(value, false)
    }

    pub fn value(&self, id: NodeId) -> &TensorBase<S> {
        &self.nodes[id.0].value
    }

    /// Gradient of the loss w.r.t. this node, if backward ran and the node
    /// participated. Layout matches the node's value, row-major.
    pub fn grad(&self, id: NodeId) -> Option<&[S]> {
        self.nodes[id.0].grad.as_deref()
    }

    pub fn grad_tensor(&self, id: NodeId) -> Option<TensorBase<S>> {
        let node = &self.nodes[id.0];
        node.grad
            .as_ref()
            .map(|g| TensorBase::new(node.value.shape().to_vec(), g.clone()).expect("grad shape"))
    }

    fn push(&mut self, value: TensorBase<S>, needs_grad: bool, op: Op<S>) -> NodeId {
        self.nodes.push(Node {
            value,
            grad: None,
            needs_grad,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].needs_grad)
    }

    fn val(&self, id: NodeId) -> &TensorBase<S> {
        &self.nodes[id.0].value
    }

    // ---- elementwise ----

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = binary_broadcast("add", self.val(a), self.val(b), |x, y| x + y)?;
        let needs = self.needs(&[a, b]);
        Ok(self.push(value, needs, Op::Add { a, b }))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = binary_broadcast("mul", self.val(a), self.val(b), |x, y| x * y)?;
        let needs = self.needs(&[a, b]);
        Ok(self.push(value, needs, Op::Mul { a, b }))
    }

    /// `a - b`, recorded as `a + (-1) * b`.
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let neg = self.scale(b, S::from_f64_lit(-1.0));
        self.add(a, neg)
    }

    pub fn scale(&mut self, a: NodeId, c: S) -> NodeId {
        let av = self.val(a);
        let data: Vec<S> = av.data().iter().map(|&x| x * c).collect();
        let value = TensorBase::new(av.shape().to_vec(), data).expect("scale shape");
        let needs = self.needs(&[a]);
        self.push(value, needs, Op::Scale { a, c })
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let av = self.val(a);
        let data: Vec<S> = av.data().iter().map(|&x| gelu_value(x)).collect();
        let value = TensorBase::new(av.shape().to_vec(), data).expect("gelu shape");
        let needs = self.needs(&[a]);
        self.push(value, needs, Op::Gelu { a })
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let av = self.val(a);
        let data: Vec<S> = av
            .data()
            .iter()
            .map(|&x| if x > S::zero() { x } else { S::zero() })
            .collect();
        let value = TensorBase::new(av.shape().to_vec(), data).expect("relu shape");
        let needs = self.needs(&[a]);
        self.push(value, needs, Op::Relu { a })
    }

    // ---- linear algebra ----

    /// Batched matrix product. The trailing two axes multiply; leading axes
    /// broadcast NumPy-style.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ash, bsh) = (self.val(a).shape().to_vec(), self.val(b).shape().to_vec());
        if ash.len() < 2 || bsh.len() < 2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: ash,
                rhs: bsh,
            });
        }
        let (m, ka) = (ash[ash.len() - 2], ash[ash.len() - 1]);
        let (kb, n) = (bsh[bsh.len() - 2], bsh[bsh.len() - 1]);
        if ka != kb {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: ash,
                rhs: bsh,
            });
        }
        let batch = broadcast_shapes("matmul", &ash[..ash.len() - 2], &bsh[..bsh.len() - 2])?;
        let count: usize = batch.iter().product();
        let a_offs = batch_offsets(&batch, &ash[..ash.len() - 2]);
        let b_offs = batch_offsets(&batch, &bsh[..bsh.len() - 2]);

        let mut data = vec![S::zero(); count * m * n];
        {
            let (ad, bd) = (self.val(a).data(), self.val(b).data());
            for bi in 0..count {
                let a_slice = &ad[a_offs[bi] * m * ka..][..m * ka];
                let b_slice = &bd[b_offs[bi] * ka * n..][..ka * n];
                mm_nn(a_slice, b_slice, &mut data[bi * m * n..][..m * n], m, ka, n);
            }
        }
        let mut out_shape = batch;
        out_shape.push(m);
        out_shape.push(n);
        let value = TensorBase::new(out_shape, data).expect("matmul shape");
        let needs = self.needs(&[a, b]);
        Ok(self.push(value, needs, Op::MatMul { a, b }))
    }

    pub fn softmax(&mut self, a: NodeId, axis: usize) -> Result<NodeId> {
        let av = self.val(a);
        let (outer, len, inner) = axis_split("softmax", av.shape(), axis)?;
        let src = av.data();
        let mut data = vec![S::zero(); src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * len * inner + i;
                let mut max = S::neg_infinity();
                for l in 0..len {
                    max = max.max(src[base + l * inner]);
                }
                let mut sum = S::zero();
                for l in 0..len {
                    let e = (src[base + l * inner] - max).exp();
                    data[base + l * inner] = e;
                    sum += e;
                }
                let inv = S::one() / sum;
                for l in 0..len {
                    data[base + l * inner] *= inv;
                }
            }
        }
        let value = TensorBase::new(av.shape().to_vec(), data).expect("softmax shape");
        let needs = self.needs(&[a]);
        Ok(self.push(value, needs, Op::Softmax { a, axis }))
    }

    /// Layer normalization along `axis` with learnable 1-D `gamma`/`beta` of
    /// the axis length.
    pub fn layer_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        axis: usize,
        eps: S,
    ) -> Result<NodeId> {
        let xv = self.val(x);
        let (outer, len, inner) = axis_split("layer_norm", xv.shape(), axis)?;
        for (name, id) in [("gamma", gamma), ("beta", beta)] {
            let s = self.val(id).shape();
            if s != [len] {
                return Err(Error::ShapeMismatch {
                    op: "layer_norm",
                    lhs: xv.shape().to_vec(),
                    rhs: s.to_vec(),
                });
            }
            let _ = name;
        }
        let src = self.val(x).data();
        let gm = self.val(gamma).data();
        let bt = self.val(beta).data();
        let inv_len = S::one() / S::from_f64_lit(len as f64);
        let mut data = vec![S::zero(); src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * len * inner + i;
                let mut mean = S::zero();
                for l in 0..len {
                    mean += src[base + l * inner];
                }
                mean *= inv_len;
                let mut var = S::zero();
                for l in 0..len {
                    let d = src[base + l * inner] - mean;
                    var += d * d;
                }
                var *= inv_len;
                let inv_std = S::one() / (var + eps).sqrt();
                for l in 0..len {
                    let xhat = (src[base + l * inner] - mean) * inv_std;
                    data[base + l * inner] = gm[l] * xhat + bt[l];
                }
            }
        }
        let value = TensorBase::new(self.val(x).shape().to_vec(), data).expect("ln shape");
        let needs = self.needs(&[x, gamma, beta]);
        Ok(self.push(
            value,
            needs,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                axis,
                eps,
            },
        ))
    }

    // ---- convolutions ----

    /// Per-channel 1-D convolution of `x: [C, T]` with `kernels: [C, K]`.
    /// Padding must preserve the sequence length (validated here).
    pub fn depthwise_conv1d(
        &mut self,
        x: NodeId,
        kernels: NodeId,
        pad: PaddingSpec,
    ) -> Result<NodeId> {
        let (xs, ks) = (self.val(x).shape().to_vec(), self.val(kernels).shape().to_vec());
        if xs.len() != 2 || ks.len() != 2 || xs[0] != ks[0] {
            return Err(Error::ShapeMismatch {
                op: "depthwise_conv1d",
                lhs: xs,
                rhs: ks,
            });
        }
        let (c, t, k) = (xs[0], xs[1], ks[1]);
        pad.validate(k, t)?;

        let src = self.val(x).data();
        let kern = self.val(kernels).data();
        let mut data = vec![S::zero(); c * t];
        let mut padded = vec![S::zero(); t + k - 1];
        for ch in 0..c {
            fill_padded(&mut padded, &src[ch * t..(ch + 1) * t], &pad);
            let kr = &kern[ch * k..(ch + 1) * k];
            let out = &mut data[ch * t..(ch + 1) * t];
            for (ti, o) in out.iter_mut().enumerate() {
                let window = &padded[ti..ti + k];
                let mut acc = S::zero();
                for (&w, &kv) in window.iter().zip(kr) {
                    acc += w * kv;
                }
                *o = acc;
            }
        }
        let value = TensorBase::new(vec![c, t], data).expect("dwconv shape");
        let needs = self.needs(&[x, kernels]);
        Ok(self.push(value, needs, Op::DepthwiseConv1d { x, kernels, pad }))
    }

    /// 1x1 channel mixer: `y[o, t] = sum_i w[o, i] * x[i, t] + b[o]`.
    pub fn pointwise_conv(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        let (xs, ws) = (self.val(x).shape().to_vec(), self.val(w).shape().to_vec());
        if xs.len() != 2 || ws.len() != 2 || ws[1] != xs[0] {
            return Err(Error::ShapeMismatch {
                op: "pointwise_conv",
                lhs: xs,
                rhs: ws,
            });
        }
        let (c_in, t, c_out) = (xs[0], xs[1], ws[0]);
        if let Some(bias) = b {
            let bs = self.val(bias).shape();
            if bs != [c_out] {
                return Err(Error::ShapeMismatch {
                    op: "pointwise_conv",
                    lhs: ws,
                    rhs: bs.to_vec(),
                });
            }
        }
        let mut data = vec![S::zero(); c_out * t];
        mm_nn(
            self.val(w).data(),
            self.val(x).data(),
            &mut data,
            c_out,
            c_in,
            t,
        );
        if let Some(bias) = b {
            let bd = self.val(bias).data();
            for o in 0..c_out {
                let row = &mut data[o * t..(o + 1) * t];
                for v in row.iter_mut() {
                    *v += bd[o];
                }
            }
        }
        let value = TensorBase::new(vec![c_out, t], data).expect("pwconv shape");
        let mut ids = vec![x, w];
        if let Some(bias) = b {
            ids.push(bias);
        }
        let needs = self.needs(&ids);
        Ok(self.push(value, needs, Op::PointwiseConv { x, w, b }))
    }

    // ---- reductions and shape ----

    /// Mean over the given axes (deduplicated); reduced axes are removed
    /// from the shape. Reducing every axis yields a rank-0 scalar.
    pub fn mean_axes(&mut self, a: NodeId, axes: &[usize]) -> Result<NodeId> {
        let av = self.val(a);
        let shape = av.shape().to_vec();
        let axes = normalize_axes("mean_axes", axes, shape.len())?;
        let (out_shape, in_to_out, count) = reduction_map(&shape, &axes);
        let inv = S::one() / S::from_f64_lit(count as f64);
        let mut data = vec![S::zero(); out_shape.iter().product()];
        let src = av.data();
        let mut walker = StridedWalker::new(&shape, &[in_to_out.clone()]);
        for &v in src {
            data[walker.offsets[0]] += v;
            walker.step();
        }
        for v in data.iter_mut() {
            *v *= inv;
        }
        let value = TensorBase::new(out_shape, data).expect("mean shape");
        let needs = self.needs(&[a]);
        Ok(self.push(value, needs, Op::MeanAxes { a, axes }))
    }

    /// Sum of all elements, as a rank-0 scalar.
    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let total: S = self.val(a).data().iter().copied().sum();
        let needs = self.needs(&[a]);
        self.push(TensorBase::scalar(total), needs, Op::SumAll { a })
    }

    /// Concatenation along `axis`; all other dimensions must match.
    pub fn concat(&mut self, inputs: &[NodeId], axis: usize) -> Result<NodeId> {
        if inputs.is_empty() {
            return Err(Error::Contract("concat of zero inputs".into()));
        }
        let first = self.val(inputs[0]).shape().to_vec();
        if axis >= first.len() {
            return Err(Error::Contract(format!(
                "concat axis {} out of range for rank {}",
                axis,
                first.len()
            )));
        }
        let mut axis_total = 0usize;
        for &id in inputs {
            let s = self.val(id).shape();
            if s.len() != first.len()
                || s.iter()
                    .zip(&first)
                    .enumerate()
                    .any(|(d, (&x, &y))| d != axis && x != y)
            {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: first,
                    rhs: s.to_vec(),
                });
            }
            axis_total += s[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = axis_total;
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let out_chunk = axis_total * inner;
        let mut data = vec![S::zero(); outer * out_chunk];
        let mut pos = 0usize;
        for &id in inputs {
            let v = self.val(id);
            let chunk = v.shape()[axis] * inner;
            let src = v.data();
            for o in 0..outer {
                data[o * out_chunk + pos..o * out_chunk + pos + chunk]
                    .copy_from_slice(&src[o * chunk..(o + 1) * chunk]);
            }
            pos += chunk;
        }
        let value = TensorBase::new(out_shape, data).expect("concat shape");
        let needs = self.needs(inputs);
        Ok(self.push(
            value,
            needs,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
        ))
    }

    /// Axis permutation: output axis `d` is input axis `perm[d]`.
    pub fn transpose(&mut self, a: NodeId, perm: &[usize]) -> Result<NodeId> {
        let av = self.val(a);
        let shape = av.shape().to_vec();
        let rank = shape.len();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Contract(format!(
                "transpose perm {:?} is not a permutation of rank {}",
                perm, rank
            )));
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let in_strides = strides_of(&shape);
        let gather: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let src = av.data();
        let mut data = Vec::with_capacity(src.len());
        let mut walker = StridedWalker::new(&out_shape, &[gather]);
        for _ in 0..src.len() {
            data.push(src[walker.offsets[0]]);
            walker.step();
        }
        let value = TensorBase::new(out_shape, data).expect("transpose shape");
        let needs = self.needs(&[a]);
        Ok(self.push(
            value,
            needs,
            Op::Transpose {
                a,
                perm: perm.to_vec(),
            },
        ))
    }

    /// Shape change without data movement (buffers are shared).
    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let value = self.val(a).reshape(shape)?;
        let needs = self.needs(&[a]);
        Ok(self.push(value, needs, Op::Reshape { a }))
    }

    /// L2 normalization of slices along `axis`, with a `1e-12` norm guard so
    /// zero vectors map to zero.
    pub fn l2_normalize(&mut self, a: NodeId, axis: usize) -> Result<NodeId> {
        let av = self.val(a);
        let (outer, len, inner) = axis_split("l2_normalize", av.shape(), axis)?;
        let eps = S::from_f64_lit(NORM_GUARD);
        let src = av.data();
        let mut data = vec![S::zero(); src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * len * inner + i;
                let mut sq = S::zero();
                for l in 0..len {
                    let v = src[base + l * inner];
                    sq += v * v;
                }
                let inv = S::one() / (sq.sqrt() + eps);
                for l in 0..len {
                    data[base + l * inner] = src[base + l * inner] * inv;
                }
            }
        }
        let value = TensorBase::new(av.shape().to_vec(), data).expect("l2norm shape");
        let needs = self.needs(&[a]);
        Ok(self.push(value, needs, Op::L2Normalize { a, axis }))
    }

    /// Cosine similarity of two equal-shape tensors viewed as flat vectors;
    /// rank-0 scalar output. Norms carry the same `1e-12` guard as
    /// [`GraphBase::l2_normalize`].
    pub fn cosine_sim(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.val(a), self.val(b));
        if av.shape() != bv.shape() {
            return Err(Error::ShapeMismatch {
                op: "cosine_sim",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let (dot, na, nb) = dot_norms(av.data(), bv.data());
        let eps = S::from_f64_lit(NORM_GUARD);
        let s = dot / ((na + eps) * (nb + eps));
        let needs = self.needs(&[a, b]);
        Ok(self.push(TensorBase::scalar(s), needs, Op::CosineSim { a, b }))
    }

    // ---- backward ----

    /// Reverse sweep from a scalar loss node, seeding its gradient with 1.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.val(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.val(loss).shape()
            )));
        }
        self.backward_seeded(loss, &[S::one()])
    }

    /// Reverse sweep from `root` with an explicit seed gradient (row-major,
    /// same element count as the node). Used to continue an outer graph's
    /// backward pass through per-sample graphs.
    pub fn backward_seeded(&mut self, root: NodeId, seed: &[S]) -> Result<()> {
        if self.backward_done {
            return Err(Error::Contract(
                "backward already ran on this graph".into(),
            ));
        }
        if seed.len() != self.val(root).numel() {
            return Err(Error::Contract(format!(
                "seed length {} does not match node with {} elements",
                seed.len(),
                self.val(root).numel()
            )));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Vec<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(seed.to_vec());
        for i in (0..=root.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            backprop(&self.nodes, i, &g, &mut grads);
            self.nodes[i].grad = Some(g);
        }
        Ok(())
    }
}

// ---- forward helpers ----

fn gelu_value<S: Scalar>(x: S) -> S {
    let a = S::from_f64_lit(0.7978845608028654); // sqrt(2/pi)
    let b = S::from_f64_lit(0.044715);
    let half = S::from_f64_lit(0.5);
    let inner = a * (x + b * x * x * x);
    half * x * (S::one() + inner.tanh())
}

fn gelu_derivative<S: Scalar>(x: S) -> S {
    let a = S::from_f64_lit(0.7978845608028654);
    let b = S::from_f64_lit(0.044715);
    let half = S::from_f64_lit(0.5);
    let three = S::from_f64_lit(3.0);
    let inner = a * (x + b * x * x * x);
    let t = inner.tanh();
    let sech2 = S::one() - t * t;
    half * (S::one() + t) + half * x * sech2 * a * (S::one() + three * b * x * x)
}

fn dot_norms<S: Scalar>(a: &[S], b: &[S]) -> (S, S, S) {
    let mut dot = S::zero();
    let mut na = S::zero();
    let mut nb = S::zero();
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    (dot, na.sqrt(), nb.sqrt())
}

/// Splits `shape` at `axis` into (product before, axis length, product after).
fn axis_split(op: &'static str, shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::Contract(format!(
            "{}: axis {} out of range for shape {:?}",
            op, axis, shape
        )));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

fn normalize_axes(op: &'static str, axes: &[usize], rank: usize) -> Result<Vec<usize>> {
    if axes.is_empty() {
        return Err(Error::Contract(format!("{}: no axes given", op)));
    }
    let mut out = axes.to_vec();
    out.sort_unstable();
    out.dedup();
    if let Some(&bad) = out.iter().find(|&&a| a >= rank) {
        return Err(Error::Contract(format!(
            "{}: axis {} out of range for rank {}",
            op, bad, rank
        )));
    }
    Ok(out)
}

/// For a reduction over `axes`: the output shape, per-input-axis strides into
/// the output, and the number of reduced elements per output cell.
fn reduction_map(shape: &[usize], axes: &[usize]) -> (Vec<usize>, Vec<usize>, usize) {
    let reduced: Vec<bool> = (0..shape.len()).map(|d| axes.contains(&d)).collect();
    let out_shape: Vec<usize> = shape
        .iter()
        .zip(&reduced)
        .filter(|(_, &r)| !r)
        .map(|(&s, _)| s)
        .collect();
    let out_strides = strides_of(&out_shape);
    let mut map = vec![0usize; shape.len()];
    let mut kept = 0usize;
    for d in 0..shape.len() {
        if !reduced[d] {
            map[d] = out_strides[kept];
            kept += 1;
        }
    }
    let count: usize = shape
        .iter()
        .zip(&reduced)
        .filter(|(_, &r)| r)
        .map(|(&s, _)| s)
        .product();
    (out_shape, map, count.max(1))
}

/// Odometer over a shape that tracks one flat offset per stride set.
/// `step` advances to the next row-major index.
struct StridedWalker {
    shape: Vec<usize>,
    strides: Vec<Vec<usize>>,
    idx: Vec<usize>,
    offsets: Vec<usize>,
}

impl StridedWalker {
    fn new(shape: &[usize], strides: &[Vec<usize>]) -> Self {
        Self {
            shape: shape.to_vec(),
            strides: strides.to_vec(),
            idx: vec![0; shape.len()],
            offsets: vec![0; strides.len()],
        }
    }

    #[inline]
    fn step(&mut self) {
        for d in (0..self.shape.len()).rev() {
            self.idx[d] += 1;
            for (o, s) in self.offsets.iter_mut().zip(&self.strides) {
                *o += s[d];
            }
            if self.idx[d] < self.shape[d] {
                return;
            }
            for (o, s) in self.offsets.iter_mut().zip(&self.strides) {
                *o -= s[d] * self.shape[d];
            }
            self.idx[d] = 0;
        }
    }
}

fn binary_broadcast<S: Scalar>(
    op: &'static str,
    a: &TensorBase<S>,
    b: &TensorBase<S>,
    f: impl Fn(S, S) -> S,
) -> Result<TensorBase<S>> {
    if a.shape() == b.shape() {
        let data: Vec<S> = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        return TensorBase::new(a.shape().to_vec(), data);
    }
    let out_shape = broadcast_shapes(op, a.shape(), b.shape())?;
    let sa = broadcast_strides(a.shape(), &out_shape);
    let sb = broadcast_strides(b.shape(), &out_shape);
    let numel: usize = out_shape.iter().product();
    let (ad, bd) = (a.data(), b.data());
    let mut data = Vec::with_capacity(numel);
    let mut walker = StridedWalker::new(&out_shape, &[sa, sb]);
    for _ in 0..numel {
        data.push(f(ad[walker.offsets[0]], bd[walker.offsets[1]]));
        walker.step();
    }
    TensorBase::new(out_shape, data)
}

/// Flat offsets (in units of whole matrices) of each broadcast batch cell
/// into an operand with the given batch shape.
fn batch_offsets(out_batch: &[usize], operand_batch: &[usize]) -> Vec<usize> {
    let strides = broadcast_strides(operand_batch, out_batch);
    let count: usize = out_batch.iter().product();
    let mut offs = Vec::with_capacity(count);
    let mut walker = StridedWalker::new(out_batch, &[strides]);
    for _ in 0..count {
        offs.push(walker.offsets[0]);
        walker.step();
    }
    offs
}

fn fill_padded<S: Scalar>(padded: &mut [S], row: &[S], pad: &PaddingSpec) {
    let len = row.len();
    for (q, slot) in padded.iter_mut().enumerate() {
        *slot = match pad.source_index(q, len) {
            Some(p) => row[p],
            None => S::zero(),
        };
    }
}

// ---- backward dispatch ----

fn ensure<'a, S: Scalar>(
    grads: &'a mut [Option<Vec<S>>],
    id: NodeId,
    numel: usize,
) -> &'a mut Vec<S> {
    grads[id.0].get_or_insert_with(|| vec![S::zero(); numel])
}

/// Routes the gradient `g` of node `i` to the gradients of its operands.
/// Reads node values immutably; writes only `grads` entries below `i`.
fn backprop<S: Scalar>(nodes: &[Node<S>], i: usize, g: &[S], grads: &mut [Option<Vec<S>>]) {
    let out_shape = nodes[i].value.shape();
    let needs = |id: NodeId| nodes[id.0].needs_grad;
    let val = |id: NodeId| &nodes[id.0].value;
    match &nodes[i].op {
        Op::Leaf => {}

        Op::Add { a, b } => {
            for &(id, _other) in &[(*a, *b), (*b, *a)] {
                if !needs(id) {
                    continue;
                }
                let shape = val(id).shape().to_vec();
                let numel = val(id).numel();
                let ga = ensure(grads, id, numel);
                if shape == out_shape {
                    for (o, &gv) in ga.iter_mut().zip(g) {
                        *o += gv;
                    }
                } else {
                    let strides = broadcast_strides(&shape, out_shape);
                    let mut walker = StridedWalker::new(out_shape, &[strides]);
                    for &gv in g {
                        ga[walker.offsets[0]] += gv;
                        walker.step();
                    }
                }
            }
        }

        Op::Mul { a, b } => {
            for &(id, other) in &[(*a, *b), (*b, *a)] {
                if !needs(id) {
                    continue;
                }
                let shape = val(id).shape().to_vec();
                let other_shape = val(other).shape().to_vec();
                let other_data = val(other).data_arc();
                let numel = val(id).numel();
                let ga = ensure(grads, id, numel);
                let sa = broadcast_strides(&shape, out_shape);
                let sb = broadcast_strides(&other_shape, out_shape);
                let mut walker = StridedWalker::new(out_shape, &[sa, sb]);
                for &gv in g {
                    ga[walker.offsets[0]] += gv * other_data[walker.offsets[1]];
                    walker.step();
                }
            }
        }

        Op::Scale { a, c } => {
            if needs(*a) {
                let numel = val(*a).numel();
                let ga = ensure(grads, *a, numel);
                for (o, &gv) in ga.iter_mut().zip(g) {
                    *o += gv * *c;
                }
            }
        }

        Op::MatMul { a, b } => {
            let (ash, bsh) = (val(*a).shape().to_vec(), val(*b).shape().to_vec());
            let (m, k) = (ash[ash.len() - 2], ash[ash.len() - 1]);
            let n = bsh[bsh.len() - 1];
            let batch = &out_shape[..out_shape.len() - 2];
            let count: usize = batch.iter().product();
            let a_offs = batch_offsets(batch, &ash[..ash.len() - 2]);
            let b_offs = batch_offsets(batch, &bsh[..bsh.len() - 2]);
            let a_data = val(*a).data_arc();
            let b_data = val(*b).data_arc();
            if needs(*a) {
                let ga = ensure(grads, *a, a_data.len());
                for bi in 0..count {
                    let g_slice = &g[bi * m * n..][..m * n];
                    let b_slice = &b_data[b_offs[bi] * k * n..][..k * n];
                    mm_nt(g_slice, b_slice, &mut ga[a_offs[bi] * m * k..][..m * k], m, n, k);
                }
            }
            if needs(*b) {
                let gb = ensure(grads, *b, b_data.len());
                for bi in 0..count {
                    let g_slice = &g[bi * m * n..][..m * n];
                    let a_slice = &a_data[a_offs[bi] * m * k..][..m * k];
                    mm_tn(a_slice, g_slice, &mut gb[b_offs[bi] * k * n..][..k * n], m, k, n);
                }
            }
        }

        Op::Softmax { a, axis } => {
            if needs(*a) {
                let y = nodes[i].value.data_arc();
                let (outer, len, inner) = axis_split("softmax", out_shape, *axis).expect("checked");
                let numel = y.len();
                let ga = ensure(grads, *a, numel);
                for o in 0..outer {
                    for ii in 0..inner {
                        let base = o * len * inner + ii;
                        let mut dot = S::zero();
                        for l in 0..len {
                            let p = base + l * inner;
                            dot += g[p] * y[p];
                        }
                        for l in 0..len {
                            let p = base + l * inner;
                            ga[p] += y[p] * (g[p] - dot);
                        }
                    }
                }
            }
        }

        Op::LayerNorm {
            x,
            gamma,
            beta,
            axis,
            eps,
        } => {
            let (outer, len, inner) = axis_split("layer_norm", out_shape, *axis).expect("checked");
            let src = val(*x).data_arc();
            let gm = val(*gamma).data_arc();
            let inv_len = S::one() / S::from_f64_lit(len as f64);
            // Recompute per-slice statistics; cheaper than caching them for
            // every node in large graphs.
            let mut xhat = vec![S::zero(); len];
            let mut ggam = vec![S::zero(); len];
            for o in 0..outer {
                for ii in 0..inner {
                    let base = o * len * inner + ii;
                    let mut mean = S::zero();
                    for l in 0..len {
                        mean += src[base + l * inner];
                    }
                    mean *= inv_len;
                    let mut var = S::zero();
                    for l in 0..len {
                        let d = src[base + l * inner] - mean;
                        var += d * d;
                    }
                    var *= inv_len;
                    let inv_std = S::one() / (var + *eps).sqrt();
                    for l in 0..len {
                        xhat[l] = (src[base + l * inner] - mean) * inv_std;
                        ggam[l] = g[base + l * inner] * gm[l];
                    }
                    if needs(*gamma) {
                        let gg = ensure(grads, *gamma, len);
                        for l in 0..len {
                            gg[l] += g[base + l * inner] * xhat[l];
                        }
                    }
                    if needs(*beta) {
                        let gb = ensure(grads, *beta, len);
                        for l in 0..len {
                            gb[l] += g[base + l * inner];
                        }
                    }
                    if needs(*x) {
                        let mut mean_gg = S::zero();
                        let mut mean_ggx = S::zero();
                        for l in 0..len {
                            mean_gg += ggam[l];
                            mean_ggx += ggam[l] * xhat[l];
                        }
                        mean_gg *= inv_len;
                        mean_ggx *= inv_len;
                        let gx = ensure(grads, *x, src.len());
                        for l in 0..len {
                            gx[base + l * inner] +=
                                inv_std * (ggam[l] - mean_gg - xhat[l] * mean_ggx);
                        }
                    }
                }
            }
        }

        Op::Gelu { a } => {
            if needs(*a) {
                let src = val(*a).data_arc();
                let ga = ensure(grads, *a, src.len());
                for ((o, &x), &gv) in ga.iter_mut().zip(src.iter()).zip(g) {
                    *o += gv * gelu_derivative(x);
                }
            }
        }

        Op::Relu { a } => {
            if needs(*a) {
                let src = val(*a).data_arc();
                let ga = ensure(grads, *a, src.len());
                for ((o, &x), &gv) in ga.iter_mut().zip(src.iter()).zip(g) {
                    if x > S::zero() {
                        *o += gv;
                    }
                }
            }
        }

        Op::DepthwiseConv1d { x, kernels, pad } => {
            let (c, t) = (val(*x).shape()[0], val(*x).shape()[1]);
            let k = val(*kernels).shape()[1];
            let src = val(*x).data_arc();
            let kern = val(*kernels).data_arc();
            let mut padded = vec![S::zero(); t + k - 1];
            let mut dpad = vec![S::zero(); t + k - 1];
            for ch in 0..c {
                let g_row = &g[ch * t..(ch + 1) * t];
                if needs(*kernels) {
                    fill_padded(&mut padded, &src[ch * t..(ch + 1) * t], pad);
                    let gk = ensure(grads, *kernels, kern.len());
                    for (ti, &gv) in g_row.iter().enumerate() {
                        if gv == S::zero() {
                            continue;
                        }
                        let window = &padded[ti..ti + k];
                        let gk_row = &mut gk[ch * k..(ch + 1) * k];
                        for (o, &w) in gk_row.iter_mut().zip(window) {
                            *o += gv * w;
                        }
                    }
                }
                if needs(*x) {
                    for v in dpad.iter_mut() {
                        *v = S::zero();
                    }
                    let kr = &kern[ch * k..(ch + 1) * k];
                    for (ti, &gv) in g_row.iter().enumerate() {
                        if gv == S::zero() {
                            continue;
                        }
                        let dwin = &mut dpad[ti..ti + k];
                        for (o, &kv) in dwin.iter_mut().zip(kr) {
                            *o += gv * kv;
                        }
                    }
                    let gx = ensure(grads, *x, src.len());
                    for (q, &dv) in dpad.iter().enumerate() {
                        if let Some(p) = pad.source_index(q, t) {
                            gx[ch * t + p] += dv;
                        }
                    }
                }
            }
        }

        Op::PointwiseConv { x, w, b } => {
            let (c_in, t) = (val(*x).shape()[0], val(*x).shape()[1]);
            let c_out = val(*w).shape()[0];
            let x_data = val(*x).data_arc();
            let w_data = val(*w).data_arc();
            if needs(*w) {
                let gw = ensure(grads, *w, w_data.len());
                mm_nt(g, &x_data, gw, c_out, t, c_in);
            }
            if needs(*x) {
                let gx = ensure(grads, *x, x_data.len());
                mm_tn(&w_data, g, gx, c_out, c_in, t);
            }
            if let Some(bias) = b {
                if needs(*bias) {
                    let gb = ensure(grads, *bias, c_out);
                    for o in 0..c_out {
                        let mut acc = S::zero();
                        for &gv in &g[o * t..(o + 1) * t] {
                            acc += gv;
                        }
                        gb[o] += acc;
                    }
                }
            }
        }

        Op::MeanAxes { a, axes } => {
            if needs(*a) {
                let shape = val(*a).shape().to_vec();
                let (_, in_to_out, count) = reduction_map(&shape, axes);
                let inv = S::one() / S::from_f64_lit(count as f64);
                let numel = val(*a).numel();
                let ga = ensure(grads, *a, numel);
                let mut walker = StridedWalker::new(&shape, &[in_to_out]);
                for o in ga.iter_mut() {
                    *o += g[walker.offsets[0]] * inv;
                    walker.step();
                }
            }
        }

        Op::SumAll { a } => {
            if needs(*a) {
                let numel = val(*a).numel();
                let ga = ensure(grads, *a, numel);
                let gv = g[0];
                for o in ga.iter_mut() {
                    *o += gv;
                }
            }
        }

        Op::Concat { inputs, axis } => {
            let outer: usize = out_shape[..*axis].iter().product();
            let inner: usize = out_shape[*axis + 1..].iter().product();
            let out_chunk = out_shape[*axis] * inner;
            let mut pos = 0usize;
            for &id in inputs {
                let chunk = val(id).shape()[*axis] * inner;
                if needs(id) {
                    let numel = val(id).numel();
                    let ga = ensure(grads, id, numel);
                    for o in 0..outer {
                        let src = &g[o * out_chunk + pos..o * out_chunk + pos + chunk];
                        let dst = &mut ga[o * chunk..(o + 1) * chunk];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
                pos += chunk;
            }
        }

        Op::Transpose { a, perm } => {
            if needs(*a) {
                let in_shape = val(*a).shape().to_vec();
                let in_strides = strides_of(&in_shape);
                let gather: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
                let numel = val(*a).numel();
                let ga = ensure(grads, *a, numel);
                let mut walker = StridedWalker::new(out_shape, &[gather]);
                for &gv in g {
                    ga[walker.offsets[0]] += gv;
                    walker.step();
                }
            }
        }

        Op::Reshape { a } => {
            if needs(*a) {
                let numel = val(*a).numel();
                let ga = ensure(grads, *a, numel);
                for (o, &gv) in ga.iter_mut().zip(g) {
                    *o += gv;
                }
            }
        }

        Op::L2Normalize { a, axis } => {
            if needs(*a) {
                let (outer, len, inner) = axis_split("l2_normalize", out_shape, *axis).expect("checked");
                let src = val(*a).data_arc();
                let eps = S::from_f64_lit(NORM_GUARD);
                let ga = ensure(grads, *a, src.len());
                for o in 0..outer {
                    for ii in 0..inner {
                        let base = o * len * inner + ii;
                        let mut sq = S::zero();
                        let mut dot = S::zero();
                        for l in 0..len {
                            let p = base + l * inner;
                            sq += src[p] * src[p];
                            dot += g[p] * src[p];
                        }
                        let n = sq.sqrt();
                        let inv = S::one() / (n + eps);
                        let corr = if n > S::zero() {
                            dot * inv * inv / n
                        } else {
                            S::zero()
                        };
                        for l in 0..len {
                            let p = base + l * inner;
                            ga[p] += g[p] * inv - src[p] * corr;
                        }
                    }
                }
            }
        }

        Op::CosineSim { a, b } => {
            let gv = g[0];
            let a_data = val(*a).data_arc();
            let b_data = val(*b).data_arc();
            let (dot, na, nb) = dot_norms(&a_data, &b_data);
            let eps = S::from_f64_lit(NORM_GUARD);
            let denom = (na + eps) * (nb + eps);
            let s = dot / denom;
            for (id, own, own_norm, other) in [
                (*a, &a_data, na, &b_data),
                (*b, &b_data, nb, &a_data),
            ] {
                if !needs(id) {
                    continue;
                }
                let corr = if own_norm > S::zero() {
                    s / (own_norm * (own_norm + eps))
                } else {
                    S::zero()
                };
                let ga = ensure(grads, id, own.len());
                for ((o, &x), &y) in ga.iter_mut().zip(own.iter()).zip(other.iter()) {
                    *o += gv * (y / denom - x * corr);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::PadMode;

    type G = GraphBase<f64>;
    type T = TensorBase<f64>;

    fn tensor(shape: &[usize], data: &[f64]) -> T {
        T::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn add_broadcasts_and_reduces_grad() {
        let mut g = G::new();
        let a = g.leaf(tensor(&[2, 3], &[1., 2., 3., 4., 5., 6.]), true);
        let b = g.leaf(tensor(&[3], &[10., 20., 30.]), true);
        let y = g.add(a, b).unwrap();
        assert_eq!(g.value(y).data(), &[11., 22., 33., 14., 25., 36.]);
        let loss = g.sum_all(y);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(a).unwrap(), &[1.; 6]);
        // b's gradient sums over the broadcast axis.
        assert_eq!(g.grad(b).unwrap(), &[2., 2., 2.]);
    }

    #[test]
    fn mul_gradients_swap_operands() {
        let mut g = G::new();
        let a = g.leaf(tensor(&[2], &[3., -4.]), true);
        let b = g.leaf(tensor(&[2], &[5., 7.]), true);
        let y = g.mul(a, b).unwrap();
        let loss = g.sum_all(y);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(a).unwrap(), &[5., 7.]);
        assert_eq!(g.grad(b).unwrap(), &[3., -4.]);
    }

    #[test]
    fn matmul_matches_hand_computation() {
        let mut g = G::new();
        let a = g.leaf(tensor(&[2, 2], &[1., 2., 3., 4.]), true);
        let b = g.leaf(tensor(&[2, 2], &[5., 6., 7., 8.]), true);
        let y = g.matmul(a, b).unwrap();
        assert_eq!(g.value(y).data(), &[19., 22., 43., 50.]);
        let loss = g.sum_all(y);
        g.backward(loss).unwrap();
        // dA = 1 * B^T, dB = A^T * 1
        assert_eq!(g.grad(a).unwrap(), &[11., 15., 11., 15.]);
        assert_eq!(g.grad(b).unwrap(), &[4., 4., 6., 6.]);
    }

    #[test]
    fn batched_matmul_broadcasts_batch_dims() {
        let mut g = G::new();
        // a: [2, 1, 2, 2] broadcast against b: [3, 2, 2] -> out [2, 3, 2, 2]
        let a = g.leaf(
            T::from_fn(&[2, 1, 2, 2], |i| (i[0] * 4 + i[2] * 2 + i[3]) as f64),
            false,
        );
        let b = g.leaf(T::from_fn(&[3, 2, 2], |i| (i[0] + i[1] + i[2]) as f64), false);
        let y = g.matmul(a, b).unwrap();
        assert_eq!(g.value(y).shape(), &[2, 3, 2, 2]);
        // Spot-check one batch cell: a[1,0] = [[4,5],[6,7]], b[2] = [[2,3],[3,4]].
        assert_eq!(g.value(y).at(&[1, 2, 0, 0]), 4. * 2. + 5. * 3.);
        assert_eq!(g.value(y).at(&[1, 2, 1, 1]), 6. * 3. + 7. * 4.);
    }

    #[test]
    fn softmax_rows_sum_to_one_and_shift_invariant() {
        let mut g = G::new();
        let x = g.leaf(tensor(&[2, 3], &[1., 2., 3., -1., 0., 100.]), false);
        let y = g.softmax(x, 1).unwrap();
        let d = g.value(y).data();
        assert!((d[0] + d[1] + d[2] - 1.0).abs() < 1e-12);
        assert!((d[3] + d[4] + d[5] - 1.0).abs() < 1e-12);
        // Large values stay finite thanks to max subtraction.
        assert!(d.iter().all(|v| v.is_finite()));

        let mut g2 = G::new();
        let x2 = g2.leaf(tensor(&[1, 3], &[1001., 1002., 1003.]), false);
        let y2 = g2.softmax(x2, 1).unwrap();
        for (v1, v2) in d[..3].iter().zip(g2.value(y2).data()) {
            assert!((v1 - v2).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_normalizes_each_slice() {
        let mut g = G::new();
        let x = g.leaf(tensor(&[2, 4], &[1., 2., 3., 4., -2., 0., 2., 4.]), false);
        let gamma = g.leaf(T::full(&[4], 1.0), false);
        let beta = g.leaf(T::zeros(&[4]), false);
        let y = g.layer_norm(x, gamma, beta, 1, 1e-5).unwrap();
        let d = g.value(y).data();
        for row in d.chunks(4) {
            let mean: f64 = row.iter().sum::<f64>() / 4.0;
            let var: f64 = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-4); // eps shifts variance slightly
        }
    }

    #[test]
    fn depthwise_keeps_length_and_respects_padding() {
        let mut g = G::new();
        let x = g.leaf(tensor(&[1, 5], &[1., 2., 3., 4., 5.]), false);
        let k = g.leaf(tensor(&[1, 3], &[1., 0., 0.]), false);
        // Prepend-2 zero padding with kernel [1,0,0] delays by two samples.
        let y = g
            .depthwise_conv1d(
                x,
                k,
                PaddingSpec {
                    mode: PadMode::Zero,
                    left: 2,
                    right: 0,
                },
            )
            .unwrap();
        assert_eq!(g.value(y).data(), &[0., 0., 1., 2., 3.]);
    }

    #[test]
    fn depthwise_rejects_bad_padding() {
        let mut g = G::new();
        let x = g.leaf(T::zeros(&[1, 5]), false);
        let k = g.leaf(T::zeros(&[1, 3]), false);
        let bad = PaddingSpec {
            mode: PadMode::Zero,
            left: 0,
            right: 0,
        };
        assert!(matches!(
            g.depthwise_conv1d(x, k, bad),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn pointwise_conv_mixes_channels() {
        let mut g = G::new();
        let x = g.leaf(tensor(&[2, 3], &[1., 2., 3., 10., 20., 30.]), false);
        let w = g.leaf(tensor(&[1, 2], &[1., 0.5]), false);
        let b = g.leaf(tensor(&[1], &[100.]), false);
        let y = g.pointwise_conv(x, w, Some(b)).unwrap();
        assert_eq!(g.value(y).data(), &[106., 112., 118.]);
    }

    #[test]
    fn mean_axes_and_sum_all() {
        let mut g = G::new();
        let x = g.leaf(T::from_fn(&[2, 3, 4], |i| (i[0] * 12 + i[1] * 4 + i[2]) as f64), true);
        let m = g.mean_axes(x, &[0, 2]).unwrap();
        assert_eq!(g.value(m).shape(), &[3]);
        // Mean over axes 0 and 2 of a row-major arange.
        assert_eq!(g.value(m).data(), &[7.5, 11.5, 15.5]);
        let s = g.sum_all(m);
        g.backward(s).unwrap();
        let grad = g.grad(x).unwrap();
        assert!(grad.iter().all(|&v| (v - 1.0 / 8.0).abs() < 1e-15));
    }

    #[test]
    fn concat_and_split_gradients() {
        let mut g = G::new();
        let a = g.leaf(tensor(&[2, 1], &[1., 2.]), true);
        let b = g.leaf(tensor(&[2, 2], &[3., 4., 5., 6.]), true);
        let y = g.concat(&[a, b], 1).unwrap();
        assert_eq!(g.value(y).shape(), &[2, 3]);
        assert_eq!(g.value(y).data(), &[1., 3., 4., 2., 5., 6.]);
        let w = g.leaf(tensor(&[2, 3], &[1., 10., 100., 1000., 10000., 100000.]), false);
        let p = g.mul(y, w).unwrap();
        let loss = g.sum_all(p);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(a).unwrap(), &[1., 1000.]);
        assert_eq!(g.grad(b).unwrap(), &[10., 100., 10000., 100000.]);
    }

    #[test]
    fn transpose_roundtrip() {
        let mut g = G::new();
        let x = g.leaf(T::from_fn(&[2, 3, 4], |i| (i[0] * 100 + i[1] * 10 + i[2]) as f64), true);
        let t = g.transpose(x, &[2, 0, 1]).unwrap();
        assert_eq!(g.value(t).shape(), &[4, 2, 3]);
        assert_eq!(g.value(t).at(&[3, 1, 2]), 123.);
        let back = g.transpose(t, &[1, 2, 0]).unwrap();
        assert_eq!(g.value(back).data(), g.value(x).data());
        assert!(g.transpose(x, &[0, 0, 1]).is_err());
    }

    #[test]
    fn reshape_shares_buffer_and_routes_grads() {
        let mut g = G::new();
        let x = g.leaf(tensor(&[2, 2], &[1., 2., 3., 4.]), true);
        let r = g.reshape(x, &[4]).unwrap();
        assert_eq!(g.value(r).data().as_ptr(), g.value(x).data().as_ptr());
        let w = g.leaf(tensor(&[4], &[1., 2., 3., 4.]), false);
        let p = g.mul(r, w).unwrap();
        let loss = g.sum_all(p);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1., 2., 3., 4.]);
    }

    #[test]
    fn l2_normalize_unit_norm_and_zero_guard() {
        let mut g = G::new();
        let x = g.leaf(tensor(&[2, 3], &[3., 4., 0., 0., 0., 0.]), false);
        let y = g.l2_normalize(x, 1).unwrap();
        let d = g.value(y).data();
        let n0 = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        assert!((n0 - 1.0).abs() < 1e-9);
        // Zero row stays zero rather than NaN.
        assert_eq!(&d[3..], &[0., 0., 0.]);
    }

    #[test]
    fn cosine_sim_known_values() {
        let mut g = G::new();
        let a = g.leaf(tensor(&[2], &[1., 0.]), false);
        let b = g.leaf(tensor(&[2], &[0., 1.]), false);
        let c = g.leaf(tensor(&[2], &[2., 0.]), false);
        let ab = g.cosine_sim(a, b).unwrap();
        let ac = g.cosine_sim(a, c).unwrap();
        assert!(g.value(ab).data()[0].abs() < 1e-12);
        assert!((g.value(ac).data()[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn shared_subexpression_accumulates_gradient() {
        // y = x * x (same node twice) -> dy/dx = 2x
        let mut g = G::new();
        let x = g.leaf(tensor(&[2], &[3., -5.]), true);
        let y = g.mul(x, x).unwrap();
        let loss = g.sum_all(y);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[6., -10.]);
    }

    #[test]
    fn backward_requires_scalar_and_runs_once() {
        let mut g = G::new();
        let x = g.leaf(tensor(&[2], &[1., 2.]), true);
        let y = g.scale(x, 2.0);
        assert!(matches!(g.backward(y), Err(Error::Contract(_))));
        let loss = g.sum_all(y);
        g.backward(loss).unwrap();
        assert!(matches!(g.backward(loss), Err(Error::Contract(_))));
    }

    #[test]
    fn constant_subgraphs_get_no_gradient() {
        let mut g = G::new();
        let x = g.leaf(tensor(&[2], &[1., 2.]), true);
        let c = g.constant(tensor(&[2], &[5., 5.]));
        let y = g.mul(x, c).unwrap();
        let loss = g.sum_all(y);
        g.backward(loss).unwrap();
        assert!(g.grad(c).is_none());
        assert_eq!(g.grad(x).unwrap(), &[5., 5.]);
    }

    #[test]
    fn backward_seeded_matches_manual_chain() {
        // Two graphs chained: h = 3x in g1; loss = sum(2 * h) in g2.
        let mut g1 = G::new();
        let x = g1.leaf(tensor(&[2], &[1., 2.]), true);
        let h = g1.scale(x, 3.0);
        let h_val = g1.value(h).clone();

        let mut g2 = G::new();
        let h_leaf = g2.leaf(h_val, true);
        let y = g2.scale(h_leaf, 2.0);
        let loss = g2.sum_all(y);
        g2.backward(loss).unwrap();
        let seed = g2.grad(h_leaf).unwrap().to_vec();

        g1.backward_seeded(h, &seed).unwrap();
        assert_eq!(g1.grad(x).unwrap(), &[6., 6.]);
    }

    #[test]
    fn gelu_reference_values() {
        // Tanh-approximation values, computed at f64 from the formula.
        let mut g = G::new();
        let x = g.leaf(tensor(&[3], &[-1., 0., 1.]), false);
        let y = g.gelu(x);
        let d = g.value(y).data();
        assert!(d[1].abs() < 1e-15);
        assert!((d[2] - 0.8411919906082768).abs() < 1e-12);
        assert!((d[0] + 0.15880800939172324).abs() < 1e-12);
    }
}
