//! Skeleton-based gait recognition.
//!
//! The crate is organized bottom-up:
//!
//! - [`numerics`]: dense tensors and a tape-based reverse-mode autodiff graph,
//!   generic over the scalar type (`f32`/`f64`).
//! - [`data`]: skeleton sequences, file formats, augmentation, balanced
//!   sampling, and a synthetic gait generator.
//! - [`model`]: the GaitMixer network (spatial self-attention mixer followed
//!   by a large-kernel temporal convolution mixer) and its GaitFormer
//!   variant (self-attention on both axes).
//! - [`metric`]: multi-similarity triplet mining and triplet margin loss.
//! - [`optim`]: Adam with decoupled weight decay and a one-cycle schedule.
//! - [`trainer`] / [`evaluator`]: the training loop and gallery/probe rank-1
//!   evaluation.
//! - [`analysis`]: 2D FFT spectra of intermediate activations and Grad-CAM
//!   attribution maps, with PNG rendering.
//!
//! The whole pipeline runs in `f64`; the [`Tensor`] and [`Graph`] aliases fix
//! that choice in one place. `f32` instantiations of the numerics layer are
//! supported and covered by tests, but nothing downstream uses them.

pub mod analysis;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod evaluator;
pub mod metric;
pub mod model;
pub mod numerics;
pub mod optim;
pub mod seeds;
pub mod threads;
pub mod trainer;

pub use error::{Error, Result};

/// Scalar type used by the gait pipeline.
pub type Elem = f64;

/// Dense tensor specialized to the pipeline scalar.
pub type Tensor = numerics::TensorBase<Elem>;

/// Autodiff graph specialized to the pipeline scalar.
pub type Graph = numerics::GraphBase<Elem>;

/// Single-precision tensor, for callers that trade accuracy for memory.
pub type TensorF32 = numerics::TensorBase<f32>;

/// Single-precision autodiff graph.
pub type GraphF32 = numerics::GraphBase<f32>;
