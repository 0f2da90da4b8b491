//! Adaptive beam-training simulator for single-cell mmWave MIMO downlinks.
//!
//! A base station and its users train over randomly drawn beam pairs while
//! each user runs sparse recovery on its beamspace channel. Users stop as soon
//! as the estimated support settles, then report their best beam pairs.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod channel;
pub mod codebook;
pub mod error;
pub mod evaluation;
pub mod gamp;
pub mod harness;
pub mod measurement;
pub mod numerics;
pub mod parallel;
pub mod session;

pub use error::{Error, Result};
