use serde::{Deserialize, Serialize};

use super::dataset::WindowedDataset;
use super::train::{test_predictions, ForecastRun, Prediction};
use super::ForecastError;
use crate::stats::{self, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IcMethod {
    #[default]
    Pearson,
    Spearman,
}

/// Why a metric could not be computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricGap {
    ZeroPriceRange,
    ZeroReturnVariance,
    InsufficientData,
    NonPositivePrice,
}

impl MetricGap {
    pub fn code(&self) -> &'static str {
        match self {
            MetricGap::ZeroPriceRange => "zero_price_range",
            MetricGap::ZeroReturnVariance => "zero_return_variance",
            MetricGap::InsufficientData => "insufficient_data",
            MetricGap::NonPositivePrice => "non_positive_price",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub rmse: f64,
    /// Divisor of nRMSE: max minus min of the actual test prices.
    pub price_range: f64,
    pub nrmse: Option<f64>,
    pub nrmse_gap: Option<MetricGap>,
    pub ic: Option<f64>,
    pub ic_gap: Option<MetricGap>,
    pub ic_method: IcMethod,
}

/// nRMSE and IC over a set of predictions.
///
/// Predicted and realized returns are both measured from the last observed
/// price: `ln(predicted / last)` against `ln(actual / last)`.
pub fn evaluate_predictions(
    preds: &[Prediction],
    method: IcMethod,
) -> Result<Metrics, ForecastError> {
    if preds.is_empty() {
        return Err(ForecastError::EmptyPartition("test"));
    }
    let n = preds.len();
    let rmse = (preds.iter().map(|p| p.error().powi(2)).sum::<f64>() / n as f64).sqrt();
    let (lo, hi) = preds
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.actual_price), hi.max(p.actual_price))
        });
    let price_range = hi - lo;
    let (nrmse, nrmse_gap) = if price_range > 0.0 {
        (Some(rmse / price_range), None)
    } else {
        (None, Some(MetricGap::ZeroPriceRange))
    };
    let (ic, ic_gap) = match information_coefficient(preds, method) {
        Ok(v) => (Some(v), None),
        Err(gap) => (None, Some(gap)),
    };
    Ok(Metrics {
        n,
        rmse,
        price_range,
        nrmse,
        nrmse_gap,
        ic,
        ic_gap,
        ic_method: method,
    })
}

fn information_coefficient(preds: &[Prediction], method: IcMethod) -> Result<f64, MetricGap> {
    if preds
        .iter()
        .any(|p| p.last_price <= 0.0 || p.actual_price <= 0.0 || p.predicted_price <= 0.0)
    {
        return Err(MetricGap::NonPositivePrice);
    }
    let predicted: Vec<f64> = preds
        .iter()
        .map(|p| (p.predicted_price / p.last_price).ln())
        .collect();
    let realized: Vec<f64> = preds
        .iter()
        .map(|p| (p.actual_price / p.last_price).ln())
        .collect();
    let r = match method {
        IcMethod::Pearson => stats::pearson(&predicted, &realized),
        IcMethod::Spearman => stats::spearman(&predicted, &realized),
    };
    r.map_err(|e| match e {
        StatsError::ZeroVariance(_) => MetricGap::ZeroReturnVariance,
        _ => MetricGap::InsufficientData,
    })
}

/// Recomputes the test predictions of `run` on `dataset` and scores them.
pub fn evaluate(run: &ForecastRun, dataset: &WindowedDataset) -> Result<Metrics, ForecastError> {
    let preds = test_predictions(&run.params, dataset)?;
    evaluate_predictions(&preds, run.options.ic_method)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, NaiveDate};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn preds(actual: &[f64], predicted: &[f64], last: &[f64]) -> Vec<Prediction> {
        let d0 = NaiveDate::from_ymd_opt(2022, 3, 1).unwrap();
        (0..actual.len())
            .map(|i| Prediction {
                instrument_id: "X".into(),
                date: d0 + Duration::days(i as i64),
                last_price: last[i],
                actual_price: actual[i],
                predicted_price: predicted[i],
            })
            .collect()
    }

    #[test]
    fn perfect_predictions() {
        let actual = [100.0, 101.0, 99.5, 100.2];
        let last = [100.5, 100.0, 101.0, 99.5];
        let m = evaluate_predictions(&preds(&actual, &actual, &last), IcMethod::Pearson).unwrap();
        assert_eq!(m.nrmse, Some(0.0));
        assert!((m.ic.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_predicted_move_has_no_ic() {
        let actual = [100.0, 101.0, 99.5, 100.2];
        let last = [100.5, 100.0, 101.0, 99.5];
        let m = evaluate_predictions(&preds(&actual, &last, &last), IcMethod::Pearson).unwrap();
        assert_eq!(m.ic, None);
        assert_eq!(m.ic_gap, Some(MetricGap::ZeroReturnVariance));
        let rms = (actual
            .iter()
            .zip(last)
            .map(|(a, l)| (a - l).powi(2))
            .sum::<f64>()
            / 4.0)
            .sqrt();
        assert!((m.nrmse.unwrap() - rms / 1.5).abs() < 1e-15);
    }

    #[test]
    fn constant_prediction_nrmse() {
        let actual = [100.0, 102.0, 101.0];
        let m = evaluate_predictions(
            &preds(&actual, &[101.0; 3], &[101.0, 100.0, 102.0]),
            IcMethod::Pearson,
        )
        .unwrap();
        let rms = ((1.0 + 1.0 + 0.0) / 3.0f64).sqrt();
        assert!((m.nrmse.unwrap() - rms / 2.0).abs() < 1e-15);
        assert_eq!(m.price_range, 2.0);
    }

    #[test]
    fn flat_test_prices_have_no_nrmse() {
        let m = evaluate_predictions(
            &preds(&[100.0; 4], &[100.1, 99.9, 100.0, 100.2], &[100.0; 4]),
            IcMethod::Pearson,
        )
        .unwrap();
        assert_eq!(m.nrmse_gap, Some(MetricGap::ZeroPriceRange));
    }

    #[test]
    fn matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 60;
        let last: Vec<f64> = (0..n).map(|_| 100.0 + rng.gen_range(-2.0..2.0)).collect();
        let actual: Vec<f64> = last.iter().map(|l| l + rng.gen_range(-0.5..0.5)).collect();
        let predicted: Vec<f64> = actual
            .iter()
            .map(|a| a + rng.gen_range(-0.3..0.3))
            .collect();
        let m =
            evaluate_predictions(&preds(&actual, &predicted, &last), IcMethod::Pearson).unwrap();

        let mut se = 0.0;
        for i in 0..n {
            se += (predicted[i] - actual[i]).powi(2);
        }
        let range = actual.iter().cloned().fold(f64::MIN, f64::max)
            - actual.iter().cloned().fold(f64::MAX, f64::min);
        let nrmse = (se / n as f64).sqrt() / range;
        let x: Vec<f64> = (0..n).map(|i| predicted[i].ln() - last[i].ln()).collect();
        let y: Vec<f64> = (0..n).map(|i| actual[i].ln() - last[i].ln()).collect();
        let (mx, my) = (
            x.iter().sum::<f64>() / n as f64,
            y.iter().sum::<f64>() / n as f64,
        );
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for i in 0..n {
            sxy += (x[i] - mx) * (y[i] - my);
            sxx += (x[i] - mx).powi(2);
            syy += (y[i] - my).powi(2);
        }
        let ic = sxy / (sxx * syy).sqrt();
        assert!((m.nrmse.unwrap() - nrmse).abs() < 1e-10);
        assert!((m.ic.unwrap() - ic).abs() < 1e-10);
    }
}
