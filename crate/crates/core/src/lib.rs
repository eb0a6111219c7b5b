//! Lie-bracket averaging of dithered input-affine systems
//! `x' = f_0(t, x) + sum_i omega^{p_i} f_i(t, x) u_i(omega t)`.
//!
//! The crate builds the averaged Lie-bracket system, simulates both with
//! fixed-step integrators, computes the sufficient dither frequency and the
//! exponential envelopes it certifies, runs a frequency adaptation scheme, and
//! numerically audits the period-wise expansion behind those guarantees.

pub mod adaptive;
pub mod cli;
pub mod config;
pub mod dither;
pub mod dynamics;
pub mod error;
pub mod expansion;
pub mod lbs;
pub mod quadrature;
pub mod scenarios;
pub mod sim;
pub mod stability;

pub use error::{Error, Result};
