use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::commands::{load_bars, load_daily, select_models};
use super::config::{PipelineConfig, SamplerKind};
use super::{
    path_component, prepare_out, require_upstream, with_workers, write_file, PipelineError,
    ALL_TOPICS, DM_MATRIX, FORECAST_DIR, FORECAST_FAILURES, FORECAST_METRICS, FORECAST_SUMMARY,
};
use crate::forecast::{self, store, ForecastRun, Metrics, Prediction, WindowedDataset};
use crate::hyperopt::{
    self, derive_seed, QuasiRandomSampler, Sampler, SearchError, SearchInput, SearchReport,
    TpeSampler,
};
use crate::market_data::{liquidity_filter, DailyBar, POOLED_ID};
use crate::sentiment::DailySentimentSeries;
use crate::stats::{dm_test, DmOptions};

pub const SEARCH_REPORT: &str = "search.json";

/// Dated forecast errors keyed by (instrument, model).
pub type RunErrors = BTreeMap<(String, String), Vec<(NaiveDate, f64)>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub instrument_id: String,
    pub model: String,
    pub run_dir: String,
    pub status: String,
    pub nrmse: Option<f64>,
    pub ic: Option<f64>,
    pub rmse: Option<f64>,
    pub price_range: Option<f64>,
    pub n_test: usize,
    pub best_trial: Option<usize>,
    pub hidden_size: Option<usize>,
    pub num_layers: Option<usize>,
    pub dropout: Option<f64>,
    pub learning_rate: Option<f64>,
    pub weight_decay: Option<f64>,
    pub history_length: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub model: String,
    pub mean_nrmse: Option<f64>,
    pub mean_ic: Option<f64>,
    /// Instruments contributing to the means.
    pub instruments: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DmRow {
    pub instrument_id: String,
    pub baseline_model: String,
    pub dm_stat: f64,
    pub p_value: f64,
    pub lag: usize,
    pub n: usize,
    pub significant_5pct: bool,
}

#[derive(Debug, Clone)]
pub struct ForecastOutcome {
    pub reference_model: String,
    pub rows: Vec<ForecastRow>,
    pub summary: Vec<ModelSummary>,
    pub dm: Vec<DmRow>,
    /// (instrument, model, reason).
    pub failures: Vec<(String, String, String)>,
    /// Test predictions per (instrument, model).
    pub predictions: BTreeMap<(String, String), Vec<Prediction>>,
}

struct Job<'a> {
    label: String,
    model: String,
    instruments: Vec<String>,
    series: Vec<(&'a [DailyBar], &'a DailySentimentSeries)>,
    seed: u64,
}

type JobResult = Result<(SearchReport, ForecastRun, WindowedDataset), SearchError>;

fn sampler_for(kind: &SamplerKind) -> Box<dyn Sampler> {
    match kind {
        SamplerKind::Halton => Box::new(QuasiRandomSampler),
        SamplerKind::Tpe => Box::new(TpeSampler::default()),
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_csv<T>(
    path: &Path,
    header: &[&str],
    rows: &[T],
    fields: impl Fn(&T) -> Vec<String>,
) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| PipelineError::internal(path.display().to_string(), e);
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(fields(r)).map_err(err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| PipelineError::internal(path.display().to_string(), e))?;
    write_file(path, bytes)
}

pub fn write_dm_csv<W: Write>(w: W, rows: &[DmRow]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "instrument_id",
        "baseline_model",
        "dm_stat",
        "p_value",
        "lag",
        "n",
        "significant_5pct",
    ])?;
    for r in rows {
        out.write_record([
            r.instrument_id.clone(),
            r.baseline_model.clone(),
            r.dm_stat.to_string(),
            r.p_value.to_string(),
            r.lag.to_string(),
            r.n.to_string(),
            r.significant_5pct.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Squared-error DM tests of `reference` against every other model, per
/// instrument, on the dates both models forecast. Negative statistics favour
/// the reference model.
pub fn dm_matrix(
    errors: &RunErrors,
    models: &[String],
    reference: &str,
    opts: DmOptions,
) -> Vec<DmRow> {
    let instruments: BTreeSet<&String> = errors.keys().map(|(i, _)| i).collect();
    let mut rows = Vec::new();
    for inst in instruments {
        let Some(reference_errors) = errors.get(&(inst.clone(), reference.to_string())) else {
            continue;
        };
        for other in models.iter().filter(|m| m.as_str() != reference) {
            let Some(other_errors) = errors.get(&(inst.clone(), other.clone())) else {
                continue;
            };
            let by_date: BTreeMap<NaiveDate, f64> = other_errors.iter().copied().collect();
            let (a, b): (Vec<f64>, Vec<f64>) = reference_errors
                .iter()
                .filter_map(|(d, e)| by_date.get(d).map(|o| (*e, *o)))
                .unzip();
            match dm_test(&a, &b, opts) {
                Ok(r) => rows.push(DmRow {
                    instrument_id: inst.clone(),
                    baseline_model: other.clone(),
                    dm_stat: r.dm_stat,
                    p_value: r.p_value,
                    lag: r.lag,
                    n: r.n,
                    significant_5pct: r.significant(0.05),
                }),
                Err(e) => log::warn!("DM {inst} {reference} vs {other}: {e}"),
            }
        }
    }
    rows
}

fn metrics_for(
    run: &ForecastRun,
    instrument: &str,
    pooled: bool,
) -> (Vec<Prediction>, Option<Metrics>) {
    let preds: Vec<Prediction> = run
        .predictions
        .iter()
        .filter(|p| p.instrument_id == instrument)
        .cloned()
        .collect();
    let metrics = if pooled {
        forecast::evaluate_predictions(&preds, run.options.ic_method).ok()
    } else {
        run.metrics.clone()
    };
    (preds, metrics)
}

fn mean(values: impl Iterator<Item = f64>) -> (Option<f64>, usize) {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        (None, 0)
    } else {
        (Some(v.iter().sum::<f64>() / v.len() as f64), v.len())
    }
}

/// Hyperparameter search and training per (instrument, model), followed by
/// the summary table and the DM matrix against the reference model.
pub fn forecast(cfg: &PipelineConfig) -> Result<ForecastOutcome, PipelineError> {
    let bars = load_bars(cfg)?;
    let daily = load_daily(cfg)?;
    prepare_out(cfg)?;
    let out = &cfg.out_dir;
    let fc = &cfg.forecast;
    let available: BTreeSet<String> = daily
        .iter()
        .filter(|s| s.topic == ALL_TOPICS)
        .map(|s| s.model_id.clone())
        .collect();
    let models = select_models(cfg, &available)?;
    if models.is_empty() {
        return Err(PipelineError::MissingUpstream(
            "daily sentiment series".into(),
        ));
    }
    let reference = fc
        .reference_model
        .clone()
        .unwrap_or_else(|| models[0].clone());
    if !models.contains(&reference) {
        return Err(PipelineError::Config(format!(
            "reference model {reference} is not among {models:?}"
        )));
    }
    let instruments =
        liquidity_filter(&bars, fc.min_trades_per_day, fc.top_n.unwrap_or(usize::MAX));
    if instruments.is_empty() {
        return Err(PipelineError::TotalFailure(
            "no instrument passes the liquidity filter".into(),
        ));
    }
    let series_of = |m: &str| {
        daily
            .iter()
            .find(|s| s.model_id == m && s.topic == ALL_TOPICS)
            .expect("model selected from available series")
    };

    let mut jobs = Vec::new();
    if fc.pooled {
        for m in &models {
            let s = series_of(m);
            jobs.push(Job {
                label: POOLED_ID.into(),
                model: m.clone(),
                instruments: instruments.clone(),
                series: instruments
                    .iter()
                    .map(|i| (bars[i].as_slice(), s))
                    .collect(),
                seed: cfg.seed,
            });
        }
    } else {
        for (k, inst) in instruments.iter().enumerate() {
            for m in &models {
                jobs.push(Job {
                    label: inst.clone(),
                    model: m.clone(),
                    instruments: vec![inst.clone()],
                    series: vec![(bars[inst].as_slice(), series_of(m))],
                    seed: derive_seed(cfg.seed, k as u64),
                });
            }
        }
    }

    let sampler = sampler_for(&fc.sampler);
    let options = fc.train_options();
    let results: Vec<JobResult> = with_workers(cfg.workers, || {
        jobs.par_iter()
            .map(|job| {
                let input = SearchInput {
                    series: job.series.clone(),
                    fractions: fc.fractions,
                };
                log::info!("forecast: searching {} / {}", job.label, job.model);
                hyperopt::search(
                    &input,
                    &fc.space,
                    sampler.as_ref(),
                    fc.budget,
                    job.seed,
                    &options,
                )
            })
            .collect()
    })?;

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut predictions = BTreeMap::new();
    for (job, result) in jobs.iter().zip(results) {
        let rel = PathBuf::from(FORECAST_DIR)
            .join(path_component(&job.label))
            .join(path_component(&job.model));
        let dir = out.join(&rel);
        fs::create_dir_all(&dir)
            .map_err(|e| PipelineError::internal(dir.display().to_string(), e))?;
        match result {
            Ok((report, run, dataset)) => {
                write_file(&dir.join(SEARCH_REPORT), report.to_json())?;
                store::write_run(&dir, &run, Some(&dataset.scalers))
                    .map_err(|e| PipelineError::internal(dir.display().to_string(), e))?;
                for inst in &job.instruments {
                    let (preds, metrics) = metrics_for(&run, inst, fc.pooled);
                    let hp = &run.hyperparams;
                    rows.push(ForecastRow {
                        instrument_id: inst.clone(),
                        model: job.model.clone(),
                        run_dir: rel.display().to_string(),
                        status: format!("{:?}", run.status),
                        nrmse: metrics.as_ref().and_then(|m| m.nrmse),
                        ic: metrics.as_ref().and_then(|m| m.ic),
                        rmse: metrics.as_ref().map(|m| m.rmse),
                        price_range: metrics.as_ref().map(|m| m.price_range),
                        n_test: preds.len(),
                        best_trial: report.best,
                        hidden_size: Some(hp.hidden_size),
                        num_layers: Some(hp.num_layers),
                        dropout: Some(hp.dropout),
                        learning_rate: Some(hp.learning_rate),
                        weight_decay: Some(hp.weight_decay),
                        history_length: Some(hp.history_length),
                    });
                    predictions.insert((inst.clone(), job.model.clone()), preds);
                }
            }
            Err(SearchError::AllFailed(report)) => {
                write_file(&dir.join(SEARCH_REPORT), report.to_json())?;
                let first = report
                    .trials
                    .iter()
                    .find_map(|t| match &t.status {
                        hyperopt::TrialStatus::Failed(r) => Some(r.clone()),
                        _ => None,
                    })
                    .unwrap_or_default();
                for inst in &job.instruments {
                    let reason =
                        format!("all {} trials failed; first: {first}", report.trials.len());
                    log::warn!("forecast {inst} / {}: {reason}", job.model);
                    failures.push((inst.clone(), job.model.clone(), reason));
                    rows.push(ForecastRow {
                        instrument_id: inst.clone(),
                        model: job.model.clone(),
                        run_dir: rel.display().to_string(),
                        status: "Failed".into(),
                        nrmse: None,
                        ic: None,
                        rmse: None,
                        price_range: None,
                        n_test: 0,
                        best_trial: None,
                        hidden_size: None,
                        num_layers: None,
                        dropout: None,
                        learning_rate: None,
                        weight_decay: None,
                        history_length: None,
                    });
                }
            }
            Err(e) => return Err(PipelineError::Config(e.to_string())),
        }
    }

    write_csv(
        &out.join(FORECAST_METRICS),
        &[
            "instrument_id",
            "model",
            "run_dir",
            "status",
            "nrmse",
            "ic",
            "rmse",
            "price_range",
            "n_test",
            "best_trial",
            "hidden_size",
            "num_layers",
            "dropout",
            "learning_rate",
            "weight_decay",
            "history_length",
        ],
        &rows,
        |r| {
            vec![
                r.instrument_id.clone(),
                r.model.clone(),
                r.run_dir.clone(),
                r.status.clone(),
                opt(r.nrmse),
                opt(r.ic),
                opt(r.rmse),
                opt(r.price_range),
                r.n_test.to_string(),
                opt(r.best_trial),
                opt(r.hidden_size),
                opt(r.num_layers),
                opt(r.dropout),
                opt(r.learning_rate),
                opt(r.weight_decay),
                opt(r.history_length),
            ]
        },
    )?;

    let summary: Vec<ModelSummary> = models
        .iter()
        .map(|m| {
            let mine = || rows.iter().filter(move |r| &r.model == m);
            let (mean_nrmse, n) = mean(mine().filter_map(|r| r.nrmse));
            let (mean_ic, _) = mean(mine().filter_map(|r| r.ic));
            ModelSummary {
                model: m.clone(),
                mean_nrmse,
                mean_ic,
                instruments: n,
            }
        })
        .collect();
    write_csv(
        &out.join(FORECAST_SUMMARY),
        &["model", "mean_nrmse", "mean_ic", "instruments"],
        &summary,
        |s| {
            vec![
                s.model.clone(),
                opt(s.mean_nrmse),
                opt(s.mean_ic),
                s.instruments.to_string(),
            ]
        },
    )?;
    write_csv(
        &out.join(FORECAST_FAILURES),
        &["instrument_id", "model", "reason"],
        &failures,
        |(i, m, r)| vec![i.clone(), m.clone(), r.clone()],
    )?;

    let errors: RunErrors = predictions
        .iter()
        .map(|(k, preds)| {
            (
                k.clone(),
                preds.iter().map(|p| (p.date, p.error())).collect(),
            )
        })
        .collect();
    let opts = DmOptions {
        lag: fc.lag()?,
        harvey: fc.harvey,
    };
    let dm_rows = dm_matrix(&errors, &models, &reference, opts);
    let mut buf = Vec::new();
    write_dm_csv(&mut buf, &dm_rows).map_err(|e| PipelineError::internal(DM_MATRIX, e))?;
    write_file(&out.join(DM_MATRIX), buf)?;
    if models.len() < 2 {
        log::info!("forecast: one model, DM matrix is empty");
    }

    let succeeded: BTreeSet<&String> = rows
        .iter()
        .filter(|r| r.status != "Failed")
        .map(|r| &r.instrument_id)
        .collect();
    if succeeded.is_empty() {
        return Err(PipelineError::TotalFailure(format!(
            "every instrument failed ({} runs); see {}",
            failures.len(),
            out.join(FORECAST_FAILURES).display()
        )));
    }
    Ok(ForecastOutcome {
        reference_model: reference,
        rows,
        summary,
        dm: dm_rows,
        failures,
        predictions,
    })
}

/// Forecast errors per (instrument, model) read back from the run
/// directories listed in `forecast_metrics.csv`.
pub fn read_run_predictions(out: &Path) -> Result<RunErrors, PipelineError> {
    let metrics = require_upstream(out, FORECAST_METRICS, "forecast")?;
    let mut rdr = csv::Reader::from_path(&metrics)
        .map_err(|e| PipelineError::internal(FORECAST_METRICS, e))?;
    let mut result = BTreeMap::new();
    for row in rdr.deserialize::<ForecastRow>() {
        let row = row.map_err(|e| PipelineError::DataQuality {
            message: e.to_string(),
            report: metrics.clone(),
        })?;
        if row.status == "Failed" {
            continue;
        }
        let path = out.join(&row.run_dir).join("predictions.csv");
        if !path.is_file() {
            return Err(PipelineError::MissingUpstream(path.display().to_string()));
        }
        let preds = store::read_predictions(&path).map_err(|e| PipelineError::DataQuality {
            message: e.to_string(),
            report: path.clone(),
        })?;
        let errors = preds
            .iter()
            .filter(|p| {
                p.instrument_id
                    .as_deref()
                    .is_none_or(|i| i == row.instrument_id)
            })
            .map(|p| (p.date, p.predicted_price - p.actual_price))
            .collect();
        result.insert((row.instrument_id, row.model), errors);
    }
    Ok(result)
}

/// Recomputes `dm_matrix.csv` from saved run directories.
pub fn dm(cfg: &PipelineConfig) -> Result<Vec<DmRow>, PipelineError> {
    let errors = read_run_predictions(&cfg.out_dir)?;
    prepare_out(cfg)?;
    let mut models: Vec<String> = cfg.models.clone();
    if models.is_empty() {
        for (_, m) in errors.keys() {
            if !models.contains(m) {
                models.push(m.clone());
            }
        }
    }
    let reference = cfg
        .forecast
        .reference_model
        .clone()
        .or_else(|| models.first().cloned())
        .ok_or_else(|| PipelineError::MissingUpstream("no successful forecast runs".into()))?;
    let opts = DmOptions {
        lag: cfg.forecast.lag()?,
        harvey: cfg.forecast.harvey,
    };
    let rows = dm_matrix(&errors, &models, &reference, opts);
    let mut buf = Vec::new();
    write_dm_csv(&mut buf, &rows).map_err(|e| PipelineError::internal(DM_MATRIX, e))?;
    write_file(&cfg.out_dir.join(DM_MATRIX), buf)?;
    Ok(rows)
}

/// Ranked trial tables keyed by `instrument/model`.
pub(crate) fn search_tables(out: &Path) -> BTreeMap<String, String> {
    let mut tables = BTreeMap::new();
    let Ok(instruments) = fs::read_dir(out.join(FORECAST_DIR)) else {
        return tables;
    };
    for inst in instruments.flatten() {
        let Ok(models) = fs::read_dir(inst.path()) else {
            continue;
        };
        for model in models.flatten() {
            let path = model.path().join(SEARCH_REPORT);
            let Ok(text) = fs::read_to_string(&path) else {
                continue;
            };
            if let Ok(report) = serde_json::from_str::<SearchReport>(&text) {
                let key = format!(
                    "{}/{}",
                    inst.file_name().to_string_lossy(),
                    model.file_name().to_string_lossy()
                );
                tables.insert(key, report.ranked_table());
            }
        }
    }
    tables
}
