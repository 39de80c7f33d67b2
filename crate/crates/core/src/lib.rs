//! Numerical laboratory for the time-fractional Rayleigh-Stokes equation
//! ∂ₜu − (1 + k D^α) Δu = |x|^σ t^γ u^ρ and its two-component system.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod frac;
pub mod fujita;
pub mod io;
pub mod mild;
pub mod relaxation;
pub mod special;
pub mod spectral;

pub use error::{Error, Result};
