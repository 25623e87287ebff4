//! Hadamard-transformed NOMA: transforms, modems, superposition and SIC,
//! channel models, analytic BER, Monte Carlo estimation and image tests.

// `!(x > 0.0)` style checks are there to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod hadamard;
pub mod modem;
pub mod noma;
pub mod channel;
pub mod analytic;
pub mod stats;
pub mod config;
pub mod montecarlo;
pub mod imaging;

pub use error::{Error, Result};
