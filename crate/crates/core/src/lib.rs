//! Nose-Hoover dynamics under Brownian heating.
//!
//! The sampler, its explicit Lyapunov function with numerical drift
//! certification, and control paths that map out the support of its transition law.

// NaN-rejecting `!(x > 0.0)` guards and frozen reference digits are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision, clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod control;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod lyapunov;
pub mod model;
pub mod quadrature;
pub mod rng;
pub mod specfun;

pub use error::{NhbError, Result};
