use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::ForecastError;
use crate::market_data::DailyBar;
use crate::sentiment::DailySentimentSeries;

/// Per-step features: standardized price, standardized sentiment, and a raw
/// 0/1 indicator for days without any article.
pub const N_FEATURES: usize = 3;
pub const FEATURE_NAMES: [&str; N_FEATURES] = ["price", "sentiment", "sentiment_missing"];

/// Bars beyond the history length required before windows are built.
pub const MIN_EXTRA_BARS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.70,
            validation: 0.15,
            test: 0.15,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<(), ForecastError> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|f| !f.is_finite() || *f <= 0.0) {
            return Err(ForecastError::Fractions(format!(
                "all fractions must be positive, got {parts:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ForecastError::Fractions(format!("fractions sum to {sum}")));
        }
        Ok(())
    }

    /// Bar indices where validation and test targets begin. Depends only on
    /// the series length, so every history length shares the same test dates.
    fn boundaries(&self, n: usize) -> (usize, usize) {
        let train_end = (n as f64 * self.train).round() as usize;
        let val_end = (n as f64 * (self.train + self.validation)).round() as usize;
        (train_end, val_end.min(n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: f64,
    pub std: f64,
}

impl Scaler {
    /// Population mean and standard deviation.
    pub fn fit(values: &[f64], feature: &'static str) -> Result<Self, ForecastError> {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if values.is_empty() || !(std > 1e-12 * mean.abs().max(1.0)) {
            return Err(ForecastError::ZeroStd(feature));
        }
        Ok(Self { mean, std })
    }

    pub fn standardize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn destandardize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScalers {
    /// Shared by the price feature and the target.
    pub price: Scaler,
    pub sentiment: Scaler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    /// Index into [`WindowedDataset::instruments`].
    pub instrument: usize,
    pub target_date: NaiveDate,
    /// Last input date; always before `target_date`.
    pub last_input_date: NaiveDate,
    /// `history × N_FEATURES`, oldest step first.
    pub inputs: Vec<f64>,
    /// Standardized next-day price.
    pub target: f64,
    pub target_price: f64,
    pub last_price: f64,
    pub split: Split,
}

/// Unstandardized per-day rows of one instrument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentRows {
    pub instrument_id: String,
    pub dates: Vec<NaiveDate>,
    pub prices: Vec<f64>,
    /// Raw daily score, 0 when no article was published.
    pub sentiment: Vec<f64>,
    pub missing: Vec<bool>,
    /// First validation-target index.
    pub train_end: usize,
    pub validation_end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalerScope {
    TrainOnly,
    AllData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedDataset {
    pub history: usize,
    pub fractions: SplitFractions,
    pub instruments: Vec<String>,
    pub scalers: FeatureScalers,
    pub windows: Vec<Window>,
    pub rows: Vec<InstrumentRows>,
}

impl WindowedDataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &Window> {
        self.windows.iter().filter(move |w| w.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    pub fn is_pooled(&self) -> bool {
        self.instruments.len() > 1
    }

    /// Scalers refit from the stored rows.
    pub fn fit_scalers(&self, scope: ScalerScope) -> Result<FeatureScalers, ForecastError> {
        fit_scalers(&self.rows, scope)
    }
}

fn instrument_rows(
    bars: &[DailyBar],
    sentiment: &DailySentimentSeries,
    history: usize,
    fractions: &SplitFractions,
) -> Result<InstrumentRows, ForecastError> {
    let n = bars.len();
    let required = history + MIN_EXTRA_BARS;
    if n <= required {
        return Err(ForecastError::TooShort { required, got: n });
    }
    let instrument_id = bars[0].instrument_id.clone();
    for pair in bars.windows(2) {
        if pair[1].date <= pair[0].date {
            return Err(ForecastError::Unordered {
                instrument: instrument_id,
                date: pair[1].date,
            });
        }
    }
    let (train_end, validation_end) = fractions.boundaries(n);
    if train_end <= history {
        return Err(ForecastError::EmptyPartition("train"));
    }
    if validation_end <= train_end {
        return Err(ForecastError::EmptyPartition("validation"));
    }
    if validation_end >= n {
        return Err(ForecastError::EmptyPartition("test"));
    }
    let mut rows = InstrumentRows {
        instrument_id,
        dates: Vec::with_capacity(n),
        prices: Vec::with_capacity(n),
        sentiment: Vec::with_capacity(n),
        missing: Vec::with_capacity(n),
        train_end,
        validation_end,
    };
    for b in bars {
        let s = sentiment.score_on(b.date);
        rows.dates.push(b.date);
        rows.prices.push(b.price);
        rows.sentiment.push(s.unwrap_or(0.0));
        rows.missing.push(s.is_none());
    }
    Ok(rows)
}

fn fit_scalers(
    rows: &[InstrumentRows],
    scope: ScalerScope,
) -> Result<FeatureScalers, ForecastError> {
    let end = |r: &InstrumentRows| match scope {
        ScalerScope::TrainOnly => r.train_end,
        ScalerScope::AllData => r.prices.len(),
    };
    let prices: Vec<f64> = rows
        .iter()
        .flat_map(|r| r.prices[..end(r)].iter().copied())
        .collect();
    let sentiment: Vec<f64> = rows
        .iter()
        .flat_map(|r| r.sentiment[..end(r)].iter().copied())
        .collect();
    Ok(FeatureScalers {
        price: Scaler::fit(&prices, "price")?,
        sentiment: Scaler::fit(&sentiment, "sentiment")?,
    })
}

fn windows_for(
    rows: &InstrumentRows,
    instrument: usize,
    history: usize,
    scalers: &FeatureScalers,
) -> Vec<Window> {
    let features: Vec<[f64; N_FEATURES]> = (0..rows.prices.len())
        .map(|i| {
            [
                scalers.price.standardize(rows.prices[i]),
                scalers.sentiment.standardize(rows.sentiment[i]),
                if rows.missing[i] { 1.0 } else { 0.0 },
            ]
        })
        .collect();
    (history..rows.prices.len())
        .map(|j| Window {
            instrument,
            target_date: rows.dates[j],
            last_input_date: rows.dates[j - 1],
            inputs: features[j - history..j].iter().flatten().copied().collect(),
            target: scalers.price.standardize(rows.prices[j]),
            target_price: rows.prices[j],
            last_price: rows.prices[j - 1],
            split: if j < rows.train_end {
                Split::Train
            } else if j < rows.validation_end {
                Split::Validation
            } else {
                Split::Test
            },
        })
        .collect()
}

/// Rolling windows of `history` days predicting the next day's price.
///
/// Targets are split chronologically by bar index according to `fractions`;
/// scalers are fit on the training days only (every day before the first
/// validation target) and applied everywhere.
pub fn build_windows(
    bars: &[DailyBar],
    sentiment: &DailySentimentSeries,
    history: usize,
    fractions: SplitFractions,
) -> Result<WindowedDataset, ForecastError> {
    build_pooled_windows(&[(bars, sentiment)], history, fractions)
}

/// Windows from several instruments sharing one set of scalers. Each
/// instrument is split on its own dates.
pub fn build_pooled_windows(
    inputs: &[(&[DailyBar], &DailySentimentSeries)],
    history: usize,
    fractions: SplitFractions,
) -> Result<WindowedDataset, ForecastError> {
    fractions.validate()?;
    if history == 0 {
        return Err(ForecastError::HyperParams(
            "history length must be at least 1".into(),
        ));
    }
    if inputs.is_empty() {
        return Err(ForecastError::TooShort {
            required: history + MIN_EXTRA_BARS,
            got: 0,
        });
    }
    let rows = inputs
        .iter()
        .map(|(bars, s)| instrument_rows(bars, s, history, &fractions))
        .collect::<Result<Vec<_>, _>>()?;
    let scalers = fit_scalers(&rows, ScalerScope::TrainOnly)?;
    let windows = rows
        .iter()
        .enumerate()
        .flat_map(|(i, r)| windows_for(r, i, history, &scalers))
        .collect();
    Ok(WindowedDataset {
        history,
        fractions,
        instruments: rows.iter().map(|r| r.instrument_id.clone()).collect(),
        scalers,
        windows,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageCheck {
    /// Refitting on the training days reproduces the stored scalers exactly.
    pub train_only_matches: bool,
    /// Scalers fit on every day, including validation and test.
    pub all_data: FeatureScalers,
    /// The all-data scalers differ from the stored ones, i.e. the check can
    /// see leakage when it happens.
    pub all_data_differs: bool,
}

impl LeakageCheck {
    pub fn passed(&self) -> bool {
        self.train_only_matches && self.all_data_differs
    }
}

pub fn leakage_check(dataset: &WindowedDataset) -> Result<LeakageCheck, ForecastError> {
    let train_only = dataset.fit_scalers(ScalerScope::TrainOnly)?;
    let all_data = dataset.fit_scalers(ScalerScope::AllData)?;
    Ok(LeakageCheck {
        train_only_matches: train_only == dataset.scalers,
        all_data_differs: all_data != dataset.scalers,
        all_data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sentiment::DailyPoint;
    use chrono::Duration;
    use proptest::prelude::*;

    fn bars(prices: &[f64]) -> Vec<DailyBar> {
        let d0 = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
        prices
            .iter()
            .enumerate()
            .map(|(i, p)| DailyBar {
                instrument_id: "B1".into(),
                date: d0 + Duration::days(i as i64),
                price: *p,
                log_return: None,
                trade_count: 1,
            })
            .collect()
    }

    fn sentiment(bars: &[DailyBar], every: usize) -> DailySentimentSeries {
        DailySentimentSeries {
            model_id: "m".into(),
            topic: String::new(),
            points: bars
                .iter()
                .enumerate()
                .filter(|(i, _)| i % every == 0)
                .map(|(i, b)| DailyPoint {
                    date: b.date,
                    score: ((i * 7) % 11) as f64 / 10.0 - 0.5,
                    article_count: 1,
                    shock: 0,
                })
                .collect(),
        }
    }

    fn wavy(n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| 100.0 + (i as f64 * 0.3).sin() + 0.01 * i as f64)
            .collect()
    }

    #[test]
    fn window_count_and_order() {
        let b = bars(&wavy(100));
        let ds = build_windows(&b, &sentiment(&b, 2), 5, SplitFractions::default()).unwrap();
        assert_eq!(ds.windows.len(), 95);
        let last = |s| ds.split(s).map(|w| w.target_date).max().unwrap();
        let first = |s| ds.split(s).map(|w| w.target_date).min().unwrap();
        assert!(last(Split::Train) < first(Split::Validation));
        assert!(last(Split::Validation) < first(Split::Test));
        assert_eq!(ds.count(Split::Test), 15);
        for w in &ds.windows {
            assert!(w.last_input_date < w.target_date);
            assert_eq!(w.inputs.len(), 5 * N_FEATURES);
        }
    }

    #[test]
    fn test_dates_do_not_depend_on_history() {
        let b = bars(&wavy(120));
        let s = sentiment(&b, 3);
        let dates = |h| {
            build_windows(&b, &s, h, SplitFractions::default())
                .unwrap()
                .split(Split::Test)
                .map(|w| w.target_date)
                .collect::<Vec<_>>()
        };
        assert_eq!(dates(5), dates(40));
    }

    #[test]
    fn constant_price_is_zero_std() {
        let b = bars(&[100.0; 60]);
        let err = build_windows(&b, &sentiment(&b, 2), 5, SplitFractions::default()).unwrap_err();
        assert!(matches!(err, ForecastError::ZeroStd("price")));
    }

    #[test]
    fn too_short_reports_minimum() {
        let b = bars(&wavy(15));
        let err = build_windows(&b, &sentiment(&b, 1), 5, SplitFractions::default()).unwrap_err();
        assert!(matches!(
            err,
            ForecastError::TooShort {
                required: 15,
                got: 15
            }
        ));
    }

    #[test]
    fn bad_fractions_rejected() {
        let b = bars(&wavy(60));
        let f = SplitFractions {
            train: 0.7,
            validation: 0.2,
            test: 0.2,
        };
        assert!(matches!(
            build_windows(&b, &sentiment(&b, 1), 5, f),
            Err(ForecastError::Fractions(_))
        ));
    }

    #[test]
    fn train_days_are_standardized() {
        let b = bars(&wavy(200));
        let ds = build_windows(&b, &sentiment(&b, 2), 10, SplitFractions::default()).unwrap();
        let r = &ds.rows[0];
        for (values, scaler) in [
            (&r.prices, ds.scalers.price),
            (&r.sentiment, ds.scalers.sentiment),
        ] {
            let z: Vec<f64> = values[..r.train_end]
                .iter()
                .map(|v| scaler.standardize(*v))
                .collect();
            let m = z.iter().sum::<f64>() / z.len() as f64;
            let v = z.iter().map(|x| (x - m).powi(2)).sum::<f64>() / z.len() as f64;
            assert!(m.abs() < 1e-10 && (v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn missing_days_flagged() {
        let b = bars(&wavy(60));
        let ds = build_windows(&b, &sentiment(&b, 4), 5, SplitFractions::default()).unwrap();
        let w = &ds.windows[0];
        let flags: Vec<f64> = w.inputs.chunks(N_FEATURES).map(|f| f[2]).collect();
        assert_eq!(flags, vec![0.0, 1.0, 1.0, 1.0, 0.0]);
        let z0 = ds.scalers.sentiment.standardize(0.0);
        assert_eq!(w.inputs[N_FEATURES + 1], z0);
    }

    #[test]
    fn leakage_detected() {
        let b = bars(&wavy(150));
        let ds = build_windows(&b, &sentiment(&b, 2), 8, SplitFractions::default()).unwrap();
        let check = leakage_check(&ds).unwrap();
        assert!(check.passed());
        let mut leaky = ds.clone();
        leaky.scalers = check.all_data;
        let again = leakage_check(&leaky).unwrap();
        assert!(!again.train_only_matches && !again.all_data_differs);
    }

    #[test]
    fn pooled_shares_scalers() {
        let b1 = bars(&wavy(80));
        let mut b2 = bars(&wavy(90).iter().map(|p| p + 3.0).collect::<Vec<_>>());
        for b in &mut b2 {
            b.instrument_id = "B2".into();
        }
        let (s1, s2) = (sentiment(&b1, 2), sentiment(&b2, 3));
        let ds =
            build_pooled_windows(&[(&b1, &s1), (&b2, &s2)], 6, SplitFractions::default()).unwrap();
        assert_eq!(ds.instruments, vec!["B1", "B2"]);
        assert_eq!(ds.windows.len(), 74 + 84);
        assert!(ds.is_pooled());
        let single = build_windows(&b1, &s1, 6, SplitFractions::default()).unwrap();
        assert_ne!(single.scalers, ds.scalers);
    }

    proptest! {
        #[test]
        fn destandardize_inverts(mean in -1e3f64..1e3, std in 1e-3f64..1e3, x in -1e4f64..1e4) {
            let s = Scaler { mean, std };
            prop_assert!((s.destandardize(s.standardize(x)) - x).abs() <= 1e-12 * x.abs().max(1.0) * (1.0 + mean.abs() / std));
        }
    }
}
