//! Safe velocity regulation for a longitudinal vehicle: switched plant model,
//! slip-safety envelopes, switching gain synthesis, finite-window model
//! learning, an L1 adaptive controller and the Simplex supervisor that ties
//! them together in a deterministic simulator.

// `!(x < y)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod envelope;
pub mod error;
pub mod l1;
pub mod learning;
pub mod linalg;
pub mod params;
pub mod plant;
pub mod sim;
pub mod supervisor;
pub mod synthesis;
pub mod vehicle;

pub use error::{Error, Result};
pub use linalg::{Mat2, Vec2};
