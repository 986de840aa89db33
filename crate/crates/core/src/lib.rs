//! Capital-share asset-pricing toolkit.
//!
//! The crate covers the full empirical pipeline around capital-share risk:
//! quarterly-to-monthly Chow-Lin disaggregation of the labour share, the
//! capital-share growth and variability factors, unconditional two-pass
//! risk-price estimation with a non-overlapping block bootstrap, rolling
//! conditional estimation, a Bayesian time-varying-beta sampler with
//! stochastic volatility and structural breaks, rolling multiplicative
//! GARCH, and a heterogeneous-agent long-run-risks calculator verified by
//! Monte Carlo.

pub mod btvbsv;
pub mod calendar;
pub mod disagg;
pub mod error;
pub mod factors;
pub mod fmb;
pub mod io;
pub mod lrr;
pub mod mgarch;
pub mod regression;
pub mod series;

pub use calendar::{DateRange, Frequency, Month, Units};
pub use error::{Error, Result};
pub use regression::{ar1_fit, ols, Ar1Fit, OlsFit};
pub use series::{
    align, align_panel_factors, descriptive_stats, DescriptiveRow, FactorSet, ReturnPanel,
    TimeSeries,
};
