//! Experiment runner for `rwre-core`: configs, execution, artifacts and the
//! pinned acceptance runs.

// Parameter checks are written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod config;
pub mod diag;
pub mod run;
