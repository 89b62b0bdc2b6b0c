//! Linear neuron boosting.
//!
//! Trains the linear neurons (dense layers, with or without bias) of a
//! differentiable network by projecting each neuron's backpropagated error onto
//! its own linear hypothesis space. Per neuron this is a least-squares problem
//! whose normal equation is `M_i θ̂_i = g_i`, with `M_i` the second-moment
//! matrix of the neuron's input features. The optimizer solves it matrix-free
//! with a few preconditioned conjugate-gradient iterations and takes a step of
//! fixed size under the block metric.
//!
//! Crate layout:
//!
//! * [`tensor`] dense row-major tensors and the matmul kernels.
//! * [`autodiff`] graph, reverse-mode tape, per-neuron JVP/VJP.
//! * [`metric`] metric operator, EMA moments, preconditioners, PCG.
//! * [`optim`] LNB (full-batch and online) and the Adam baseline.
//! * [`models`] MLP and matrix-factorization graph builders, initializers.
//! * [`harness`] IDX ingestion, synthetic problems, experiment runner, CSV.
//! * [`verify`] the invariant and oracle checks behind `lnb verify`.

// `x as f64` is a no-op only in the default build, and `!(x > 0.0)` is how
// NaN gets rejected alongside out-of-range values.
#![allow(clippy::unnecessary_cast, clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod error;
pub mod harness;
pub mod metric;
pub mod models;
pub mod optim;
pub mod rng;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
pub use tensor::Tensor;

/// Scalar type used throughout the crate.
#[cfg(not(feature = "single-precision"))]
pub type Real = f64;

/// Scalar type used throughout the crate.
#[cfg(feature = "single-precision")]
pub type Real = f32;
