//! Hierarchical panel regression with latent interactive factors.
//!
//! Fits `y_ijt = x_ijt' b + common component + noise` on three-dimensional
//! panels (industries, countries, periods), where the common component mixes
//! factors shared by every unit with factors specific to each industry. The
//! crate estimates the slope by alternating least squares, picks both factor
//! counts from thresholded eigenvalue ratios, and ships a simulation engine,
//! a replication harness, and moving-block bootstrap intervals for the slope.
//!
//! The `parallel` feature (on by default) runs replication loops, resampling,
//! and per-industry work on a rayon pool; disabling it yields a fully
//! sequential build with identical outputs.

pub mod bootstrap;
pub mod dgp;
pub mod error;
pub mod heterogeneous;
pub mod homogeneous;
pub mod linalg;
pub mod montecarlo;
pub mod panel;
mod par;
pub mod select;
mod seed;

pub use error::{Error, Result};
