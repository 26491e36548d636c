//! Dense tensors and reverse-mode automatic differentiation.
//!
//! [`TensorBase`] is an immutable row-major value (shape + shared buffer).
//! [`GraphBase`] is an arena tape: every operation appends a node holding its
//! result, and `backward` replays the tape in reverse, accumulating gradients
//! into per-node slots. Nodes are identified by [`NodeId`]; the tape order is
//! already topological because operands must exist before an op is recorded.

mod gradcheck;
mod graph;
mod kernels;
mod padding;
mod scalar;
mod tensor;

pub use gradcheck::{check_gradients, check_gradients_probed, GradCheckReport, GradCheckSettings};
pub use graph::{GraphBase, NodeId};
pub use padding::{PadMode, PaddingSpec};
pub use scalar::Scalar;
pub use tensor::TensorBase;
