//! Covariance estimation under M-matrix constraints, baseline estimators,
//! portfolio construction and a rolling out-of-sample backtester.

// Comparisons such as `!(x > 0.0)` are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
mod bcd;
pub mod error;
pub mod estimators;
pub mod io;
pub mod linalg;
pub mod mtp2;
pub mod panel;
pub mod portfolio;
pub mod serde_float;
pub mod stats;

pub use error::{Error, ErrorKind, Result};
pub use linalg::{SpdMatrix, SymMatrix};
pub use panel::{DatedSeries, FactorPanel, MarketCaps, MarketDataBundle, ReturnKind, ReturnsPanel};
