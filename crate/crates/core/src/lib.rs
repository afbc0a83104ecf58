//! Differentially private LQG tracking control for networks of agents.
//!
//! Agents privatize their outputs and reference limits with the Gaussian
//! mechanism; a cloud aggregator runs a steady-state Kalman filter and LQ
//! tracking controller on the noisy data. The crate synthesizes that
//! controller, bounds the estimation error it incurs, picks privacy levels
//! for a target error or cost, prices privacy in closed form and simulates
//! the closed loop.

// NaN must fail positivity checks, so `!(x > 0.0)` is intended throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod calibrate;
pub mod cost;
pub mod error;
pub mod io;
pub mod linalg;
pub mod mechanism;
pub mod model;
pub mod presets;
pub mod rng;
pub mod sim;
pub mod synthesis;

pub use error::{Error, ErrorCategory, Result};
pub use linalg::Matrix;
