//! Blind, near-pilotless demodulation of massive-MIMO OFDM uplink signals.
//!
//! The received frequency-domain matrix is modeled as
//! `Y_f = Σ_u X_f(u)·F_L·H_t(u) + W_f`, a low-rank product of a diagonal symbol
//! matrix, a few DFT columns and a short time-domain channel. [`blind_rx`]
//! recovers symbols and channel jointly by alternating minimization started
//! from an SVD-based initial point; a single rotational pilot per user fixes
//! the remaining complex scale. [`baseline_rx`] holds the conventional
//! pilot-based receivers used for comparison and [`harness`] runs the seeded
//! Monte Carlo experiments.

// `!(x >= 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline_rx;
pub mod blind_rx;
pub mod channel;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod waveform;

pub use error::{Error, Result};
pub use numerics::{CMatrix, C64};
