use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{Split, Window, WindowedDataset, N_FEATURES};
use super::lstm::{backward, forward, predict, LstmParams, LstmShape};
use super::metrics::{evaluate_predictions, IcMethod, Metrics};
use super::optim::AdamW;
use super::ForecastError;
use crate::hyperopt::HyperParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub max_epochs: usize,
    /// Non-improving epochs tolerated before stopping.
    pub patience: usize,
    pub batch_size: usize,
    pub ic_method: IcMethod,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            max_epochs: 200,
            patience: 10,
            batch_size: 32,
            ic_method: IcMethod::Pearson,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    /// Ran all epochs.
    Completed,
    EarlyStopped {
        epoch: usize,
    },
    /// Loss became non-finite during `epoch`.
    Diverged {
        epoch: usize,
    },
}

impl RunStatus {
    pub fn is_failed(&self) -> bool {
        matches!(self, RunStatus::Diverged { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub instrument_id: String,
    pub date: NaiveDate,
    pub last_price: f64,
    pub actual_price: f64,
    pub predicted_price: f64,
}

impl Prediction {
    pub fn error(&self) -> f64 {
        self.predicted_price - self.actual_price
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRun {
    pub instruments: Vec<String>,
    pub hyperparams: HyperParams,
    pub options: TrainOptions,
    pub seed: u64,
    /// Parameters from the best validation epoch.
    pub params: LstmParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_validation_loss: f64,
    pub status: RunStatus,
    /// Test-partition predictions; empty for diverged runs.
    pub predictions: Vec<Prediction>,
    pub metrics: Option<Metrics>,
}

fn validate(
    dataset: &WindowedDataset,
    hp: &HyperParams,
    opts: &TrainOptions,
) -> Result<(), ForecastError> {
    let bad = |m: String| Err(ForecastError::HyperParams(m));
    if hp.history_length != dataset.history {
        return bad(format!(
            "history length {} does not match dataset history {}",
            hp.history_length, dataset.history
        ));
    }
    if hp.hidden_size == 0 || hp.num_layers == 0 {
        return bad("hidden size and layer count must be positive".into());
    }
    if !(0.0..1.0).contains(&hp.dropout) {
        return bad(format!("dropout {} outside [0, 1)", hp.dropout));
    }
    if !(hp.learning_rate > 0.0 && hp.learning_rate.is_finite()) {
        return bad(format!("learning rate {}", hp.learning_rate));
    }
    if !(hp.weight_decay >= 0.0 && hp.weight_decay.is_finite()) {
        return bad(format!("weight decay {}", hp.weight_decay));
    }
    if opts.batch_size == 0 || opts.max_epochs == 0 {
        return bad("batch size and max epochs must be positive".into());
    }
    for s in [Split::Train, Split::Validation, Split::Test] {
        if dataset.count(s) == 0 {
            return Err(ForecastError::EmptyPartition(s.name()));
        }
    }
    Ok(())
}

/// Mean squared error in standardized units, evaluation mode. Non-finite
/// activations count as an infinite loss.
fn split_loss(params: &LstmParams, windows: &[&Window]) -> f64 {
    let mut sum = 0.0;
    for w in windows {
        match predict(params, &w.inputs) {
            Ok(y) => sum += (y - w.target).powi(2),
            Err(_) => return f64::INFINITY,
        }
    }
    sum / windows.len() as f64
}

/// Test-partition predictions in price units.
pub fn test_predictions(
    params: &LstmParams,
    dataset: &WindowedDataset,
) -> Result<Vec<Prediction>, ForecastError> {
    dataset
        .split(Split::Test)
        .map(|w| {
            let z = predict(params, &w.inputs)?;
            Ok(Prediction {
                instrument_id: dataset.instruments[w.instrument].clone(),
                date: w.target_date,
                last_price: w.last_price,
                actual_price: w.target_price,
                predicted_price: dataset.scalers.price.destandardize(z),
            })
        })
        .collect()
}

/// Mean squared error, in price units, of carrying the last price forward.
pub fn persistence_mse(dataset: &WindowedDataset, split: Split) -> f64 {
    let (sum, n) = dataset.split(split).fold((0.0, 0usize), |(s, n), w| {
        (s + (w.last_price - w.target_price).powi(2), n + 1)
    });
    sum / n as f64
}

/// Fits an LSTM with AdamW on mini-batches of the training windows and keeps
/// the parameters of the epoch with the lowest validation loss.
pub fn train(
    dataset: &WindowedDataset,
    hp: &HyperParams,
    opts: &TrainOptions,
    seed: u64,
) -> Result<ForecastRun, ForecastError> {
    validate(dataset, hp, opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = LstmShape {
        input_size: N_FEATURES,
        hidden_size: hp.hidden_size,
        num_layers: hp.num_layers,
    };
    let dropout = if hp.num_layers == 1 { 0.0 } else { hp.dropout };
    let mut params = LstmParams::init(shape, dropout, rng.next_u64());
    let mut optimizer = AdamW::new(hp.learning_rate, hp.weight_decay);
    let train_windows: Vec<&Window> = dataset.split(Split::Train).collect();
    let val_windows: Vec<&Window> = dataset.split(Split::Validation).collect();

    let mut best = params.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = None;
    let mut since_best = 0;
    let mut history = Vec::new();
    let mut status = RunStatus::Completed;
    let mut order: Vec<usize> = (0..train_windows.len()).collect();

    'epochs: for epoch in 0..opts.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(opts.batch_size) {
            let mut grads = params.zeros_like();
            for &i in batch {
                let w = train_windows[i];
                let step = forward(&params, &w.inputs, true, rng.next_u64())
                    .and_then(|cache| backward(&params, &cache, w.target));
                match step {
                    Ok((loss, g)) if loss.is_finite() => {
                        loss_sum += loss;
                        grads.add_scaled(&g, 1.0);
                    }
                    _ => {
                        status = RunStatus::Diverged { epoch };
                        break 'epochs;
                    }
                }
            }
            grads.scale(1.0 / batch.len() as f64);
            optimizer.step(&mut params, &grads);
            if !params.is_finite() {
                status = RunStatus::Diverged { epoch };
                break 'epochs;
            }
        }
        let train_loss = loss_sum / train_windows.len() as f64;
        let validation_loss = split_loss(&params, &val_windows);
        history.push(EpochRecord {
            epoch,
            train_loss,
            validation_loss,
        });
        if !validation_loss.is_finite() {
            status = RunStatus::Diverged { epoch };
            break;
        }
        if validation_loss < best_loss {
            best_loss = validation_loss;
            best = params.clone();
            best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > opts.patience {
                status = RunStatus::EarlyStopped { epoch };
                break;
            }
        }
    }

    let (predictions, metrics) = if status.is_failed() {
        (Vec::new(), None)
    } else {
        let preds = test_predictions(&best, dataset)?;
        let metrics = evaluate_predictions(&preds, opts.ic_method)?;
        (preds, Some(metrics))
    };
    Ok(ForecastRun {
        instruments: dataset.instruments.clone(),
        hyperparams: hp.clone(),
        options: *opts,
        seed,
        params: best,
        history,
        best_epoch,
        best_validation_loss: best_loss,
        status,
        predictions,
        metrics,
    })
}
