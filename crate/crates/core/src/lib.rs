//! Probabilistic digital twin of a structurally degrading UAV wing.
//!
//! The crate covers the full asset-twin loop: offline calibration of an
//! asset-specific model, exact Bayesian inference over a discrete health
//! state, reward evaluation, MDP planning, and a closed-loop mission
//! simulation driven over a message transport.

// NaN-rejecting guards are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod config;
pub mod error;
pub mod inference;
pub mod model;
pub mod planner;
pub mod rng;
pub mod sim;
pub mod surrogate;

pub use error::{Error, ErrorKind, Result};
