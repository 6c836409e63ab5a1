//! Next-day price forecasting with a from-scratch LSTM.
//!
//! [`build_windows`] turns a bar series and a daily sentiment series into
//! standardized rolling windows, [`train`] fits an [`LstmParams`] with AdamW
//! and early stopping, and [`evaluate`] reports nRMSE and IC on the test
//! partition.

mod dataset;
pub mod lstm;
mod metrics;
mod optim;
pub mod store;
mod train;

use chrono::NaiveDate;
use thiserror::Error;

pub use dataset::{
    build_pooled_windows, build_windows, leakage_check, FeatureScalers, LeakageCheck, Scaler,
    ScalerScope, Split, SplitFractions, Window, WindowedDataset, FEATURE_NAMES, N_FEATURES,
};
pub use lstm::{backward, forward, predict, ForwardCache, LstmParams, LstmShape};
pub use metrics::{evaluate, evaluate_predictions, IcMethod, MetricGap, Metrics};
pub use optim::AdamW;
pub use train::{
    persistence_mse, test_predictions, train, EpochRecord, ForecastRun, Prediction, RunStatus,
    TrainOptions,
};

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("series too short: need more than {required} bars, got {got}")]
    TooShort { required: usize, got: usize },
    #[error("invalid split fractions: {0}")]
    Fractions(String),
    #[error("feature `{0}` has zero standard deviation on the training days")]
    ZeroStd(&'static str),
    #[error("{0} partition is empty")]
    EmptyPartition(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite activation in {gate} gate (layer {layer}, step {step})")]
    NonFinite {
        gate: &'static str,
        layer: usize,
        step: usize,
    },
    #[error("forward cache is stale: parameters changed since the forward pass")]
    StaleCache,
    #[error("invalid hyperparameters: {0}")]
    HyperParams(String),
    #[error("bars for {instrument} are not strictly increasing at {date}")]
    Unordered { instrument: String, date: NaiveDate },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
