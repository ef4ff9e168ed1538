//! Coherent-feedback enhanced entanglement of two mechanical resonators
//! coupled to a driven optical cavity.
//!
//! The crate builds the linearized Gaussian dynamics (drift and diffusion
//! matrices) from experimental or effective parameters, solves for
//! stationary and time-dependent covariance matrices, measures mechanical
//! entanglement through the logarithmic negativity and sweeps the feedback
//! parameters (beam-splitter reflectivity `r_B`, loop phase `θ`) to locate
//! optima.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dynamics;
pub mod entanglement;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod output;
pub mod params;

pub use error::{Error, Result};
