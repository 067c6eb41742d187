//! Functional factor model for daily electricity spot price curves.
//!
//! Hourly prices are modeled as noisy observations of a smooth daily
//! price-demand function. The daily functions share a small common basis;
//! their scores are forecast as time series and combined with demand
//! forecasts to produce hourly price forecasts.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baselines;
pub mod error;
pub mod evaluate;
pub mod forecast;
pub mod fpca;
pub mod ingest;
mod ols;
pub mod optim;
pub mod quadrature;
pub mod simulate;
pub mod smoothing;

pub use error::{Error, Result};

/// Version tag written into every serialized artifact.
pub const SCHEMA_VERSION: u32 = 1;
