//! Kernel ridge regression based Q-learning with a generative model.
//!
//! The pipeline: pick a fixed design of state-action points by greedy maximum
//! posterior variance ([`design`]), then run rounds of approximate value iteration in
//! which each round regresses sampled next-state values onto the design with kernel
//! ridge regression ([`krr`], [`kqlearn`]). [`mdp`] provides synthetic MDPs with
//! kernel-smooth transitions and exact oracles; [`harness`] runs seeded sweeps.

// `!(x > 0.0)` style guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod design;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod kqlearn;
pub mod krr;
pub mod linalg;
pub mod mdp;

pub use error::{Error, Result};

/// Library version, recorded in experiment metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
