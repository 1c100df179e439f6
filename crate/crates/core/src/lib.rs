//! Bottom-up short-term load forecasting.
//!
//! Forecasts the next-hour total electrical load of a household or building
//! by combining three ideas:
//!
//! 1. **Critical appliance selection** — score every monitored appliance by
//!    load volatility and daily-pattern regularity, then keep only the subset
//!    whose removal flattens the total load ([`filtering`]).
//! 2. **Usage-correlation grouping** — cluster the selected appliances by
//!    lagged correlation of their on/off usage vectors, so appliances that
//!    switch together are forecast together ([`grouping`]).
//! 3. **Collaborative forecasting** — per-group LSTM-FC forecasters plus a
//!    wavelet-band total-load forecaster, fused by a small refinement network
//!    trained in a second stage ([`pipeline`], [`dwt`], [`neural`]).
//!
//! The crate is `no_std` + `alloc`: everything here is pure computation over
//! in-memory series. File formats, dataset loaders, and the command-line
//! front end live in the companion `loadcast` crate.

#![no_std]
// Index-based loops over parallel arrays are the clearest form for the
// numeric kernels here.
#![allow(clippy::needless_range_loop)]
// Test binaries link std, whose inherent f64 methods shadow the libm-backed
// FloatExt trait and make its imports look unused there.
#![cfg_attr(test, allow(unused_imports))]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod dwt;
pub mod error;
pub mod eval;
pub mod filtering;
pub mod grouping;
mod math;
pub mod neural;
pub mod panel;
pub mod pipeline;
pub mod rng;
pub mod series;
pub mod synth;

pub use error::Error;

/// Result alias used across the crate.
pub type Result<T> = core::result::Result<T, Error>;
