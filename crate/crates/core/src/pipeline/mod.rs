//! The `bondlab` commands: each reads its inputs (or an upstream command's
//! outputs) from disk and writes deterministic artifacts into the output
//! directory.
//!
//! | command           | reads                                   | writes |
//! |-------------------|-----------------------------------------|--------|
//! | `ingest`          | trades, calendar, raw articles          | `bars.csv`, `corpus.jsonl`, `cleaning_report.csv` |
//! | `score-aggregate` | `corpus.jsonl`, probability files       | `sentiment_records.csv`, `daily_sentiment.csv` |
//! | `events`          | `bars.csv`, `daily_sentiment.csv`       | `correlation_grid.csv`, `accuracy.csv`, SVG figures |
//! | `forecast`        | `bars.csv`, `daily_sentiment.csv`       | run directories, `forecast_summary.csv`, `dm_matrix.csv` |
//! | `dm`              | run directories                         | `dm_matrix.csv` |
//! | `report`          | any of the above                        | `report.md` |

mod commands;
pub mod config;
mod forecasting;
pub mod svg;

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use commands::{
    events, ingest, report, score_aggregate, EventsSummary, IngestSummary, ScoreSummary,
};
pub use config::{Overrides, PipelineConfig};
pub use forecasting::{
    dm, dm_matrix, forecast, read_run_predictions, write_dm_csv, DmRow, ForecastOutcome,
    ForecastRow, ModelSummary, RunErrors,
};

pub const BARS: &str = "bars.csv";
pub const CORPUS: &str = "corpus.jsonl";
pub const CLEANING_REPORT: &str = "cleaning_report.csv";
pub const MALFORMED_ROWS: &str = "malformed_rows.csv";
pub const CORPUS_SPLIT: &str = "corpus_split.csv";
pub const RECORDS: &str = "sentiment_records.csv";
pub const DAILY: &str = "daily_sentiment.csv";
pub const SCORING_REPORT: &str = "scoring_report.csv";
pub const PROBABILITY_ERRORS: &str = "probability_errors.csv";
pub const GRID: &str = "correlation_grid.csv";
pub const ACCURACY: &str = "accuracy.csv";
pub const ACCURACY_SVG: &str = "accuracy.svg";
pub const FORECAST_DIR: &str = "forecast";
pub const FORECAST_SUMMARY: &str = "forecast_summary.csv";
pub const FORECAST_METRICS: &str = "forecast_metrics.csv";
pub const FORECAST_FAILURES: &str = "forecast_failures.csv";
pub const DM_MATRIX: &str = "dm_matrix.csv";
pub const REPORT: &str = "report.md";
pub const CONFIG_ECHO: &str = "resolved_config.toml";

/// Topic label of the series that pools every topic.
pub const ALL_TOPICS: &str = "all";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("input not found: {}", .0.display())]
    MissingInput(PathBuf),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("data quality: {message} (see {})", .report.display())]
    DataQuality { message: String, report: PathBuf },
    #[error("missing upstream artifact: {0}")]
    MissingUpstream(String),
    #[error("all runs failed: {0}")]
    TotalFailure(String),
    #[error("{context}: {message}")]
    Internal { context: String, message: String },
}

impl PipelineError {
    /// Stable process exit code.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::MissingInput(_) | PipelineError::Config(_) => 2,
            PipelineError::DataQuality { .. } => 3,
            PipelineError::MissingUpstream(_) => 4,
            PipelineError::TotalFailure(_) | PipelineError::Internal { .. } => 5,
        }
    }

    pub(crate) fn internal(context: impl Into<String>, e: impl std::fmt::Display) -> Self {
        PipelineError::Internal {
            context: context.into(),
            message: e.to_string(),
        }
    }
}

pub(crate) fn require_input(path: &Path) -> Result<(), PipelineError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(PipelineError::MissingInput(path.to_path_buf()))
    }
}

pub(crate) fn require_upstream(
    out: &Path,
    name: &str,
    producer: &str,
) -> Result<PathBuf, PipelineError> {
    let p = out.join(name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(PipelineError::MissingUpstream(format!(
            "{} (run `{producer}` first)",
            p.display()
        )))
    }
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)
            .map_err(|e| PipelineError::internal(dir.display().to_string(), e))?;
    }
    fs::write(path, contents).map_err(|e| PipelineError::internal(path.display().to_string(), e))
}

/// Creates the output directory and writes the resolved config into it.
pub(crate) fn prepare_out(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    write_file(&cfg.out_dir.join(CONFIG_ECHO), cfg.to_toml())
}

/// Model id made safe for a path component.
pub fn path_component(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub(crate) fn with_workers<T: Send>(
    workers: usize,
    f: impl FnOnce() -> T + Send,
) -> Result<T, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PipelineError::internal("thread pool", e))?;
    Ok(pool.install(f))
}
