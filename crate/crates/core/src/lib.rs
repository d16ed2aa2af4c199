//! Recovery of sub-population regression vectors from batched data.
//!
//! Data arrives as a collection of *small* batches (two or more samples each)
//! and *medium* batches (at least `n_m` samples each). Every batch holds i.i.d.
//! samples from one hidden component of a mixture of linear regressions. The
//! crate estimates the regression vector of the component that generated a
//! designated target batch by running clipped-gradient descent, where each
//! gradient is estimated in three stages:
//!
//! 1. [`clip::clip_est`] picks a clipping scale from the target batch,
//! 2. [`subspace::grad_sub_est`] finds a low-dimensional subspace from small
//!    batches that preserves the target's expected clipped gradient,
//! 3. [`grad_est::grad_est`] filters medium batches against the target inside
//!    that subspace and takes a median-of-means estimate.
//!
//! [`recovery::recover_list`] repeats this for many sampled target batches and
//! returns a list that covers every heavy component; [`selection`] picks an
//! entry for a fresh batch. [`synth`] generates the synthetic mixtures used by
//! the experiment harness.

pub mod clip;
pub mod error;
pub mod grad_est;
pub mod linalg;
pub mod model;
pub mod recovery;
pub mod rng;
pub mod selection;
pub mod subspace;
pub mod synth;

pub use error::{Error, Result};
pub use model::{AlgoConfig, Batch, BatchPool, ComponentCount, Constants, GradContext, PoolKind, RegressionSample};
pub use rng::Seed;

/// Dense column vector used for inputs, iterates and gradients.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix used for covariances and moment matrices.
pub type Matrix = nalgebra::DMatrix<f64>;
