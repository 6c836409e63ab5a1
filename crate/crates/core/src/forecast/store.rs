//! On-disk layout of a [`ForecastRun`]:
//!
//! ```text
//! run_dir/
//!   params.bin       little-endian f64 tensors, back to back
//!   params.json      shape manifest (name, shape, offset per tensor)
//!   predictions.csv  date,actual_price,predicted_price
//!   metrics.csv      metric,value
//!   history.csv      epoch,train_loss,validation_loss
//!   config.json      hyperparameters, options, seed, scalers, status
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::dataset::FeatureScalers;
use super::lstm::{LstmParams, LstmShape};
use super::train::{ForecastRun, Prediction};
use super::ForecastError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in f64 elements.
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamManifest {
    pub shape: LstmShape,
    pub dropout: f64,
    pub dtype: String,
    pub tensors: Vec<TensorEntry>,
}

impl ParamManifest {
    pub fn of(params: &LstmParams) -> Self {
        let mut offset = 0;
        let tensors = params
            .tensors()
            .into_iter()
            .map(|t| {
                let e = TensorEntry {
                    name: t.name,
                    shape: t.shape,
                    offset,
                    len: t.data.len(),
                };
                offset += e.len;
                e
            })
            .collect();
        Self {
            shape: params.shape,
            dropout: params.dropout,
            dtype: "f64-le".into(),
            tensors,
        }
    }
}

#[derive(Serialize)]
struct RunConfig<'a> {
    instruments: &'a [String],
    seed: u64,
    hyperparams: &'a crate::hyperopt::HyperParams,
    options: &'a super::TrainOptions,
    status: &'a super::RunStatus,
    best_epoch: Option<usize>,
    best_validation_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scalers: Option<&'a FeatureScalers>,
}

pub fn write_params(dir: &Path, params: &LstmParams) -> Result<(), ForecastError> {
    let bytes: Vec<u8> = params
        .to_flat()
        .iter()
        .flat_map(|v| v.to_le_bytes())
        .collect();
    fs::write(dir.join("params.bin"), bytes)?;
    let manifest = serde_json::to_string_pretty(&ParamManifest::of(params))?;
    fs::write(dir.join("params.json"), manifest + "\n")?;
    Ok(())
}

pub fn read_params(dir: &Path) -> Result<LstmParams, ForecastError> {
    let manifest: ParamManifest = serde_json::from_slice(&fs::read(dir.join("params.json"))?)?;
    let bytes = fs::read(dir.join("params.bin"))?;
    if bytes.len() % 8 != 0 {
        return Err(ForecastError::Shape(format!(
            "params.bin has {} bytes",
            bytes.len()
        )));
    }
    let flat: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let params = LstmParams::from_flat(manifest.shape, manifest.dropout, &flat)?;
    if ParamManifest::of(&params) != manifest {
        return Err(ForecastError::Shape(
            "manifest does not match the tensor layout".into(),
        ));
    }
    Ok(params)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_predictions<W: Write>(
    w: W,
    preds: &[Prediction],
    with_instrument: bool,
) -> Result<(), ForecastError> {
    let mut out = csv::Writer::from_writer(w);
    if with_instrument {
        out.write_record(["instrument_id", "date", "actual_price", "predicted_price"])?;
    } else {
        out.write_record(["date", "actual_price", "predicted_price"])?;
    }
    for p in preds {
        let date = p.date.to_string();
        let actual = p.actual_price.to_string();
        let predicted = p.predicted_price.to_string();
        if with_instrument {
            out.write_record([p.instrument_id.as_str(), &date, &actual, &predicted])?;
        } else {
            out.write_record([date.as_str(), &actual, &predicted])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct PredictionRow {
    #[serde(default)]
    pub instrument_id: Option<String>,
    pub date: NaiveDate,
    pub actual_price: f64,
    pub predicted_price: f64,
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>, ForecastError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<PredictionRow>, _>>()?)
}

/// Writes every artifact of `run` into `dir`, creating it if needed.
pub fn write_run(
    dir: &Path,
    run: &ForecastRun,
    scalers: Option<&FeatureScalers>,
) -> Result<(), ForecastError> {
    fs::create_dir_all(dir)?;
    write_params(dir, &run.params)?;
    write_predictions(
        fs::File::create(dir.join("predictions.csv"))?,
        &run.predictions,
        run.instruments.len() > 1,
    )?;

    let mut metrics = csv::Writer::from_path(dir.join("metrics.csv"))?;
    metrics.write_record(["metric", "value"])?;
    if let Some(m) = &run.metrics {
        let rows = [
            ("n", m.n.to_string()),
            ("rmse", m.rmse.to_string()),
            ("price_range", m.price_range.to_string()),
            ("nrmse", opt(m.nrmse)),
            (
                "nrmse_gap",
                m.nrmse_gap
                    .map(|g| g.code().to_string())
                    .unwrap_or_default(),
            ),
            ("ic", opt(m.ic)),
            (
                "ic_gap",
                m.ic_gap.map(|g| g.code().to_string()).unwrap_or_default(),
            ),
            ("ic_method", format!("{:?}", m.ic_method).to_lowercase()),
        ];
        for (k, v) in rows {
            metrics.write_record([k, v.as_str()])?;
        }
    }
    metrics.flush()?;

    let mut history = csv::Writer::from_path(dir.join("history.csv"))?;
    history.write_record(["epoch", "train_loss", "validation_loss"])?;
    for e in &run.history {
        history.write_record([
            e.epoch.to_string(),
            e.train_loss.to_string(),
            e.validation_loss.to_string(),
        ])?;
    }
    history.flush()?;

    let config = RunConfig {
        instruments: &run.instruments,
        seed: run.seed,
        hyperparams: &run.hyperparams,
        options: &run.options,
        status: &run.status,
        best_epoch: run.best_epoch,
        best_validation_loss: run
            .best_validation_loss
            .is_finite()
            .then_some(run.best_validation_loss),
        scalers,
    };
    fs::write(
        dir.join("config.json"),
        serde_json::to_string_pretty(&config)? + "\n",
    )?;
    Ok(())
}
