//! Parallel replica dynamics for overdamped Langevin diffusions, with the
//! quasi-stationary samplers and spectral oracle used to validate it.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod exec;
pub mod experiment;
pub mod io;
pub mod parrep;
pub mod potential;
pub mod qsd;
pub mod rng;
pub mod sde;
pub mod spectral;
pub mod stats;
