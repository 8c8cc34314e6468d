// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Energy management for a subway station microgrid: a braking-energy
//! battery and a two-mode ventilation system, controlled by model predictive
//! control or stochastic dynamic programming and assessed by Monte Carlo.

pub mod assess;
pub mod calibrate;
pub mod config;
pub mod error;
pub mod integrator;
pub mod model;
pub mod mpc;
pub mod pipeline;
pub mod rng;
pub mod scenarios;
pub mod sdp;

pub use error::{EmsError, Result};
