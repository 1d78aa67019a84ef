//! Regularized gating architectures for multimodal sensor fusion.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corruption;
pub mod data;
pub mod diffcore;
pub mod fusion;
pub mod harness;
pub mod lattice;
