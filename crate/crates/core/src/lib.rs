//! Learned 32-dimensional local image descriptors.
//!
//! A six-stage convolutional network (three valid convolutions with tanh,
//! two 2×2 average subsamplings, one linear fully connected layer) maps a
//! 64×64 grayscale patch to a descriptor. Training uses a contrastive pair
//! loss: a hinge that pulls corresponding patches within a margin and a
//! squared hinge that pushes non-corresponding patches beyond another.
//! Descriptors are scored by the false-positive rate at 95% true-match
//! recall.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the
//! [`Precision`] switch picks one for a whole run.
//!
//! Module map:
//! - [`tensor`]: dense row-major storage and the few elementwise/matrix ops.
//! - [`layers`]: forward/backward for convolution, pooling, tanh, dense.
//! - [`model`]: the network, its parameters, init and shape plan.
//! - [`loss`]: distances, pull/push losses and their gradients.
//! - [`data`]: dataset ingestion, pair files, sampling, synthetic scenes.
//! - [`train`]: minibatch gradient descent, stopping rule, checkpoints.
//! - [`eval`]: pair distances, ROC and FPR at fixed recall.
//! - [`protocol`]: train-on-one / evaluate-on-others reports.

pub mod data;
pub mod error;
pub mod eval;
pub mod layers;
pub mod loss;
pub mod model;
pub mod protocol;
pub mod real;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use real::{Precision, Real};
pub use tensor::Tensor;
