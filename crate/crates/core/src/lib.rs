//! Adaptive conformal prediction for noisy parametrised quantum circuits.
//!
//! * [`qsim`]: dense state-vector and density-matrix simulation with Kraus noise
//! * [`pqc`]: the angle-encoded hardware-efficient regression model and shot sampling
//! * [`conformal`]: sample-based conformity scores, split and adaptive conformal prediction
//! * [`oracle`]: analytic ground truth for the synthetic bimodal task
//! * [`datagen`]: seeded generation of that task

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod conformal;
pub mod datagen;
pub mod error;
pub mod oracle;
pub mod pqc;
pub mod qsim;

pub use error::{Error, Result};
