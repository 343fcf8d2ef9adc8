//! Shapes of weighted graphs under fractional balanced partitions.
//!
//! A nonnegative symmetric matrix `S` is studied through its k-shapes, the
//! sets of quotients `M S M^T` over the transportation polytope K(k,n).
//! This crate samples and enumerates shapes, measures Hausdorff distances
//! between them, runs the balancing/regularity construction, stores limit
//! objects as consistent dyadic tables and computes isomorphism-invariant
//! diagnostics such as the entropy dimension.
//!
//! The crate is `no_std` with `alloc` when the default `std` feature is off;
//! `std` only adds rayon-backed parallelism. Outputs are identical either way.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod math;
pub mod matcore;
pub mod rng;
pub mod sampler;
pub mod shapes;
pub mod regularity;
pub mod dyadic;
pub mod invariants;
pub mod generators;

mod par;

pub use error::{Error, Result};
pub use matcore::{
    contraction_check, gamma, l1_dist, quotient, quotient_balanced, AlphaVector, FractionalPartitionMatrix, Matrix,
    NonNegSymMatrix,
};
pub use sampler::{Mixture, PolytopeSampler, Witness, SAMPLER_VERSION};
