//! Sentiment analytics for sovereign bond markets.
//!
//! The crate covers the path from raw inputs to evaluation:
//!
//! - [`market_data`]: trade CSV ingestion, daily percent-of-par bars, log
//!   returns and liquidity filtering.
//! - [`news`]: article cleaning, trading-date alignment and chronological
//!   splits.
//! - [`sentiment`]: class probabilities to continuous scores, label binning,
//!   class balancing, daily series and shock detection.
//! - [`events`]: rolling correlations and next-day directional accuracy on
//!   shock days.
//! - [`stats`]: Pearson, percentiles, Newey-West variance, Diebold-Mariano.
//! - [`forecast`]: a from-scratch LSTM next-day price forecaster.
//! - [`hyperopt`]: seeded hyperparameter search for the forecaster.
//! - [`pipeline`]: the `bondlab` command implementations, reports and SVG
//!   figures.
//! - [`synthetic`]: generators for signal-planted test data.

pub mod calendar;
pub mod events;
pub mod forecast;
pub mod hyperopt;
pub mod market_data;
pub mod news;
pub mod pipeline;
pub mod sentiment;
pub mod stats;
pub mod synthetic;

pub use calendar::TradingCalendar;
