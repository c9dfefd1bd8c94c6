//! Random walks in random environments: environment sampling, box geometry,
//! exit-time simulation, multiscale renormalization and one-dimensional
//! exact solutions.

// Parameter checks are written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conditions;
pub mod env;
pub mod error;
pub mod geometry;
pub mod oned;
pub mod renorm;
pub mod rng;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
