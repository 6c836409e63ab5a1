//! Sentiment/return alignment: rolling correlations and next-day directional
//! accuracy around sentiment shocks.

use std::fmt;
use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::TradingCalendar;
use crate::market_data::DailyBar;
use crate::sentiment::DailySentimentSeries;
use crate::stats::{self, StatsError};

pub const DEFAULT_WINDOW_DAYS: usize = 7;
pub const MIN_CORRELATION_POINTS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EventError {
    #[error("no overlapping dates: sentiment {sentiment:?}, bars {bars:?}")]
    NoOverlap {
        sentiment: Option<(NaiveDate, NaiveDate)>,
        bars: Option<(NaiveDate, NaiveDate)>,
    },
    #[error("window must span at least 2 days, got {0}")]
    BadWindow(usize),
    #[error("no usable events ({excluded} excluded)")]
    NoEvents { excluded: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedPair {
    pub date: NaiveDate,
    pub sentiment: f64,
    /// Log return of the next bar after `date`.
    pub return_next: Option<f64>,
    pub return_same: Option<f64>,
    pub shock_sign: i8,
}

fn span<T>(items: &[T], date: impl Fn(&T) -> NaiveDate) -> Option<(NaiveDate, NaiveDate)> {
    Some((date(items.first()?), date(items.last()?)))
}

/// Inner join of a daily sentiment series with one bar series (both sorted by
/// date). Dates missing from `calendar` are skipped.
pub fn align(
    series: &DailySentimentSeries,
    bars: &[DailyBar],
    calendar: &TradingCalendar,
) -> Result<Vec<AlignedPair>, EventError> {
    let mut pairs = Vec::new();
    for p in &series.points {
        if !calendar.contains(p.date) {
            continue;
        }
        let Ok(i) = bars.binary_search_by_key(&p.date, |b| b.date) else {
            continue;
        };
        pairs.push(AlignedPair {
            date: p.date,
            sentiment: p.score,
            return_next: bars.get(i + 1).and_then(|b| b.log_return),
            return_same: bars[i].log_return,
            shock_sign: p.shock,
        });
    }
    if pairs.is_empty() {
        return Err(EventError::NoOverlap {
            sentiment: span(&series.points, |p| p.date),
            bars: span(bars, |b| b.date),
        });
    }
    Ok(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbsentReason {
    InsufficientData,
    ZeroVariance,
    NoOverlap,
}

impl fmt::Display for AbsentReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::InsufficientData => "insufficient_data",
            Self::ZeroVariance => "zero_variance",
            Self::NoOverlap => "no_overlap",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCell {
    pub r: Option<f64>,
    /// Points entering the correlation.
    pub n: usize,
    pub reason: Option<AbsentReason>,
}

impl CorrelationCell {
    pub fn absent(reason: AbsentReason, n: usize) -> Self {
        Self {
            r: None,
            n,
            reason: Some(reason),
        }
    }
}

/// Trailing mean over `window` consecutive entries; `None` until the window
/// is full or when any member is missing.
pub fn trailing_mean(values: &[Option<f64>], window: usize) -> Vec<Option<f64>> {
    (0..values.len())
        .map(|i| {
            if i + 1 < window {
                return None;
            }
            let slice = &values[i + 1 - window..=i];
            let mut sum = 0.0;
            for v in slice {
                sum += (*v)?;
            }
            Some(sum / window as f64)
        })
        .collect()
}

/// Smoothed series fed into the correlation, kept for inspection and tests.
pub fn smoothed_inputs(
    pairs: &[AlignedPair],
    window_days: usize,
    shocks_only: bool,
) -> (Vec<f64>, Vec<f64>) {
    let sentiment: Vec<Option<f64>> = pairs.iter().map(|p| Some(p.sentiment)).collect();
    let returns: Vec<Option<f64>> = pairs.iter().map(|p| p.return_same).collect();
    let s = trailing_mean(&sentiment, window_days);
    let r = trailing_mean(&returns, window_days);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, p) in pairs.iter().enumerate() {
        if shocks_only && p.shock_sign == 0 {
            continue;
        }
        if let (Some(a), Some(b)) = (s[i], r[i]) {
            xs.push(a);
            ys.push(b);
        }
    }
    (xs, ys)
}

/// Pearson correlation between the trailing-mean smoothed sentiment and
/// same-day returns, optionally restricted to shock dates.
pub fn rolling_correlation(
    pairs: &[AlignedPair],
    window_days: usize,
    shocks_only: bool,
) -> Result<CorrelationCell, EventError> {
    if window_days < 2 {
        return Err(EventError::BadWindow(window_days));
    }
    let (xs, ys) = smoothed_inputs(pairs, window_days, shocks_only);
    let n = xs.len();
    if n < MIN_CORRELATION_POINTS {
        return Ok(CorrelationCell::absent(AbsentReason::InsufficientData, n));
    }
    Ok(match stats::pearson(&xs, &ys) {
        Ok(r) => CorrelationCell {
            r: Some(r),
            n,
            reason: None,
        },
        Err(StatsError::ZeroVariance(_)) => CorrelationCell::absent(AbsentReason::ZeroVariance, n),
        Err(_) => CorrelationCell::absent(AbsentReason::InsufficientData, n),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionalAccuracy {
    pub accuracy: f64,
    pub correct: usize,
    /// Events that entered the accuracy.
    pub n_events: usize,
    /// Zero sentiment or zero next-day return.
    pub excluded_zero: usize,
    /// No next-day return available.
    pub excluded_no_next: usize,
    /// Exact two-sided binomial p-value against 0.5.
    pub p_value: f64,
}

impl DirectionalAccuracy {
    pub fn total(&self) -> usize {
        self.n_events + self.excluded_zero + self.excluded_no_next
    }

    /// Wilson interval at normal quantile `z`.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        stats::wilson_interval(self.correct as u64, self.n_events as u64, z)
    }
}

/// Share of events where the sign of sentiment matches the sign of the next
/// day's return.
pub fn directional_accuracy(
    pairs: &[AlignedPair],
    shocks_only: bool,
) -> Result<DirectionalAccuracy, EventError> {
    let mut correct = 0;
    let mut used = 0;
    let mut excluded_zero = 0;
    let mut excluded_no_next = 0;
    for p in pairs.iter().filter(|p| !shocks_only || p.shock_sign != 0) {
        let Some(ret) = p.return_next else {
            excluded_no_next += 1;
            continue;
        };
        if ret == 0.0 || p.sentiment == 0.0 {
            excluded_zero += 1;
            continue;
        }
        used += 1;
        if (ret > 0.0) == (p.sentiment > 0.0) {
            correct += 1;
        }
    }
    if used == 0 {
        return Err(EventError::NoEvents {
            excluded: excluded_zero + excluded_no_next,
        });
    }
    Ok(DirectionalAccuracy {
        accuracy: correct as f64 / used as f64,
        correct,
        n_events: used,
        excluded_zero,
        excluded_no_next,
        p_value: stats::binomial_two_sided_half(correct as u64, used as u64),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub topic: String,
    pub instrument: String,
    pub model: String,
    pub cell: CorrelationCell,
}

/// Correlation values for one model: topics by instruments (or the pooled
/// aggregate).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorrelationGrid {
    pub model: String,
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    /// Row-major, `rows.len() * cols.len()`.
    pub values: Vec<Option<f64>>,
}

impl CorrelationGrid {
    pub fn from_cells(model: &str, cells: &[GridCell]) -> Self {
        let mut rows: Vec<String> = Vec::new();
        let mut cols: Vec<String> = Vec::new();
        for c in cells.iter().filter(|c| c.model == model) {
            if !rows.contains(&c.topic) {
                rows.push(c.topic.clone());
            }
            if !cols.contains(&c.instrument) {
                cols.push(c.instrument.clone());
            }
        }
        let mut values = vec![None; rows.len() * cols.len()];
        for c in cells.iter().filter(|c| c.model == model) {
            let i = rows.iter().position(|r| *r == c.topic).unwrap_or(0);
            let j = cols.iter().position(|r| *r == c.instrument).unwrap_or(0);
            values[i * cols.len() + j] = c.cell.r;
        }
        Self {
            model: model.to_string(),
            rows,
            cols,
            values,
        }
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.values[row * self.cols.len() + col]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub topic: String,
    pub model: String,
    pub result: Option<DirectionalAccuracy>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_grid_csv<W: Write>(w: W, cells: &[GridCell]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["topic", "instrument", "model", "r", "n", "reason"])?;
    for c in cells {
        wtr.write_record([
            c.topic.clone(),
            c.instrument.clone(),
            c.model.clone(),
            opt(c.cell.r),
            c.cell.n.to_string(),
            c.cell.reason.map(|r| r.to_string()).unwrap_or_default(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_accuracy_csv<W: Write>(w: W, rows: &[AccuracyRow]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["topic", "model", "accuracy", "n_events", "p_value"])?;
    for r in rows {
        wtr.write_record([
            r.topic.clone(),
            r.model.clone(),
            opt(r.result.map(|a| a.accuracy)),
            r.result.map(|a| a.n_events).unwrap_or(0).to_string(),
            opt(r.result.map(|a| a.p_value)),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sentiment::DailyPoint;
    use proptest::prelude::*;

    fn day(i: usize) -> NaiveDate {
        NaiveDate::from_ymd_opt(2022, 1, 3).unwrap() + chrono::Days::new(i as u64)
    }

    fn cal(n: usize) -> TradingCalendar {
        TradingCalendar::new((0..n).map(day))
    }

    fn bars(returns: &[Option<f64>]) -> Vec<DailyBar> {
        returns
            .iter()
            .enumerate()
            .map(|(i, r)| DailyBar {
                instrument_id: "X".into(),
                date: day(i),
                price: 100.0,
                log_return: *r,
                trade_count: 1,
            })
            .collect()
    }

    fn sentiment(points: &[(usize, f64, i8)]) -> DailySentimentSeries {
        DailySentimentSeries {
            model_id: "m".into(),
            topic: "t".into(),
            points: points
                .iter()
                .map(|(i, s, k)| DailyPoint {
                    date: day(*i),
                    score: *s,
                    article_count: 1,
                    shock: *k,
                })
                .collect(),
        }
    }

    fn pairs_from(sent: &[f64], ret: &[f64], shock: &[i8]) -> Vec<AlignedPair> {
        (0..sent.len())
            .map(|i| AlignedPair {
                date: day(i),
                sentiment: sent[i],
                return_next: ret.get(i + 1).copied(),
                return_same: Some(ret[i]),
                shock_sign: shock[i],
            })
            .collect()
    }

    #[test]
    fn align_populates_returns() {
        let b = bars(&[None, Some(0.01), Some(-0.02)]);
        let pairs = align(&sentiment(&[(1, 0.3, 1), (2, -0.1, 0)]), &b, &cal(3)).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].return_same, Some(0.01));
        assert_eq!(pairs[0].return_next, Some(-0.02));
        assert_eq!(pairs[1].return_next, None);
        assert_eq!(pairs[0].shock_sign, 1);
    }

    #[test]
    fn align_disjoint_is_error() {
        let b = bars(&[None, Some(0.01)]);
        let err = align(&sentiment(&[(5, 0.3, 0)]), &b, &cal(10)).unwrap_err();
        assert!(matches!(
            err,
            EventError::NoOverlap {
                sentiment: Some(_),
                bars: Some(_)
            }
        ));
    }

    #[test]
    fn last_day_excluded_from_next_day_analysis() {
        let b = bars(&[None, Some(0.01), Some(0.02)]);
        let pairs = align(&sentiment(&[(1, 0.3, 1), (2, 0.5, 1)]), &b, &cal(3)).unwrap();
        let acc = directional_accuracy(&pairs, true).unwrap();
        assert_eq!(acc.n_events, 1);
        assert_eq!(acc.excluded_no_next, 1);
        assert_eq!(acc.total(), 2);
    }

    #[test]
    fn perfect_and_inverse_correlation() {
        let ret: Vec<f64> = (0..20)
            .map(|i| ((i * 7 % 11) as f64 - 5.0) * 1e-3)
            .collect();
        let shocks = vec![1i8; 20];
        let pos = rolling_correlation(&pairs_from(&ret, &ret, &shocks), 7, true).unwrap();
        assert!((pos.r.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(pos.n, 14);
        let neg_sent: Vec<f64> = ret.iter().map(|r| -r).collect();
        let neg = rolling_correlation(&pairs_from(&neg_sent, &ret, &shocks), 7, true).unwrap();
        assert!((neg.r.unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn correlation_matches_direct_formula() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(20);
        let ret: Vec<f64> = (0..20).map(|_| rng.gen_range(-0.01..0.01)).collect();
        let sent: Vec<f64> = ret
            .iter()
            .map(|r| 30.0 * r + rng.gen_range(-0.2..0.2))
            .collect();
        let shocks: Vec<i8> = (0..20).map(|i| if i % 3 == 0 { 0 } else { 1 }).collect();
        let pairs = pairs_from(&sent, &ret, &shocks);
        let cell = rolling_correlation(&pairs, 7, true).unwrap();

        // independent: explicit window sums, then sum-of-products Pearson
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 6..20 {
            if shocks[i] == 0 {
                continue;
            }
            xs.push(sent[i - 6..=i].iter().sum::<f64>() / 7.0);
            ys.push(ret[i - 6..=i].iter().sum::<f64>() / 7.0);
        }
        let n = xs.len() as f64;
        let sx: f64 = xs.iter().sum();
        let sy: f64 = ys.iter().sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(a, b)| a * b).sum();
        let sxx: f64 = xs.iter().map(|a| a * a).sum();
        let syy: f64 = ys.iter().map(|b| b * b).sum();
        let r = (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt());
        assert_eq!(cell.n, xs.len());
        assert!(
            (cell.r.unwrap() - r).abs() < 1e-12,
            "{} vs {r}",
            cell.r.unwrap()
        );
    }

    #[test]
    fn absent_cells() {
        let ret: Vec<f64> = (0..20).map(|i| i as f64 * 1e-3).collect();
        let flat = rolling_correlation(&pairs_from(&[0.2; 20], &ret, &[1; 20]), 7, false).unwrap();
        assert_eq!(flat.reason, Some(AbsentReason::ZeroVariance));
        assert!(flat.r.is_none());
        let short =
            rolling_correlation(&pairs_from(&ret[..8], &ret[..8], &[1; 8]), 7, false).unwrap();
        assert_eq!(short.reason, Some(AbsentReason::InsufficientData));
        assert!(matches!(
            rolling_correlation(&[], 1, false),
            Err(EventError::BadWindow(1))
        ));
    }

    #[test]
    fn accuracy_examples() {
        let sent = [0.5, -0.5, 0.5, -0.5, 0.5, -0.5, 0.5, -0.5, 0.5, -0.5, 0.0];
        let ret = [
            0.0, 0.1, -0.1, 0.1, -0.1, 0.1, -0.1, 0.1, -0.1, 0.1, -0.1, 0.2,
        ];
        let pairs: Vec<AlignedPair> = (0..10)
            .map(|i| AlignedPair {
                date: day(i),
                sentiment: sent[i],
                return_next: Some(ret[i + 1]),
                return_same: Some(ret[i]),
                shock_sign: 1,
            })
            .collect();
        let acc = directional_accuracy(&pairs, true).unwrap();
        assert_eq!(acc.accuracy, 1.0);
        assert_eq!(acc.n_events, 10);

        // 6 of 8 correct
        let mut p8: Vec<AlignedPair> = pairs[..8].to_vec();
        p8[0].sentiment = -p8[0].sentiment;
        p8[1].sentiment = -p8[1].sentiment;
        let acc = directional_accuracy(&p8, true).unwrap();
        assert_eq!(acc.accuracy, 0.75);
        assert!((acc.p_value - 74.0 / 256.0).abs() < 1e-14);
    }

    #[test]
    fn zero_events_rejected() {
        let pairs = pairs_from(&[0.0, 0.0], &[0.1, 0.1], &[1, 1]);
        assert!(matches!(
            directional_accuracy(&pairs, true),
            Err(EventError::NoEvents { excluded: 2 })
        ));
        assert!(matches!(
            directional_accuracy(&pairs, false),
            Err(EventError::NoEvents { .. })
        ));
    }

    #[test]
    fn coin_flip_accuracy_near_half() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let trials = 1000;
        let events = 50;
        let mut total = 0.0;
        for _ in 0..trials {
            let pairs: Vec<AlignedPair> = (0..events)
                .map(|i| AlignedPair {
                    date: day(i),
                    sentiment: if rng.gen::<bool>() { 0.4 } else { -0.4 },
                    return_next: Some(if rng.gen::<bool>() { 0.01 } else { -0.01 }),
                    return_same: None,
                    shock_sign: 1,
                })
                .collect();
            total += directional_accuracy(&pairs, true).unwrap().accuracy;
        }
        let mean = total / trials as f64;
        let half = 2.576 * (0.25 / (trials * events) as f64).sqrt();
        assert!((mean - 0.5).abs() < half, "{mean}");
    }

    #[test]
    fn csv_exports() {
        let cells = vec![GridCell {
            topic: "t".into(),
            instrument: "POOLED".into(),
            model: "m".into(),
            cell: CorrelationCell::absent(AbsentReason::ZeroVariance, 12),
        }];
        let mut buf = Vec::new();
        write_grid_csv(&mut buf, &cells).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "topic,instrument,model,r,n,reason\nt,POOLED,m,,12,zero_variance\n"
        );
        let grid = CorrelationGrid::from_cells("m", &cells);
        assert_eq!((grid.rows.len(), grid.cols.len()), (1, 1));
        assert_eq!(grid.get(0, 0), None);
    }

    proptest! {
        #[test]
        fn affine_invariance_and_negation(
            data in prop::collection::vec((-1.0f64..1.0, -0.02f64..0.02, prop::bool::ANY), 12..60),
            a in 0.1f64..10.0, b in -1.0f64..1.0, c in 0.1f64..10.0, d in -0.1f64..0.1,
        ) {
            let sent: Vec<f64> = data.iter().map(|x| x.0).collect();
            let ret: Vec<f64> = data.iter().map(|x| x.1).collect();
            let shocks: Vec<i8> = data.iter().map(|x| if x.2 { 1 } else { 0 }).collect();
            let base = rolling_correlation(&pairs_from(&sent, &ret, &shocks), 7, false).unwrap();
            let s2: Vec<f64> = sent.iter().map(|x| a * x + b).collect();
            let r2: Vec<f64> = ret.iter().map(|x| c * x + d).collect();
            let moved = rolling_correlation(&pairs_from(&s2, &r2, &shocks), 7, false).unwrap();
            if let (Some(x), Some(y)) = (base.r, moved.r) {
                prop_assert!((x - y).abs() < 1e-12, "{} vs {}", x, y);
            }
            let neg: Vec<f64> = sent.iter().map(|x| -x).collect();
            let negated = rolling_correlation(&pairs_from(&neg, &ret, &shocks), 7, false).unwrap();
            if let (Some(x), Some(y)) = (base.r, negated.r) {
                prop_assert!((x + y).abs() < 1e-12);
            }
            let p = pairs_from(&sent, &ret, &shocks);
            let pn = pairs_from(&neg, &ret, &shocks);
            if let (Ok(x), Ok(y)) = (directional_accuracy(&p, false), directional_accuracy(&pn, false)) {
                prop_assert_eq!(x.n_events, y.n_events);
                prop_assert!((x.accuracy - (1.0 - y.accuracy)).abs() < 1e-12);
            }
        }
    }
}
