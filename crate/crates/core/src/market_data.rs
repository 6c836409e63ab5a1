//! Bond trade ingestion, daily aggregation and liquidity filtering.
//!
//! Prices are percent of par throughout: a £1000 face-value bond trading at
//! £1010 is recorded as 101. Daily prices are the volume-weighted mean of the
//! day's trades (plain mean when volumes are missing) and log returns are taken
//! against the previous emitted bar of the same instrument.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::TradingCalendar;

/// Fraction of malformed rows above which ingestion is aborted.
pub const MAX_MALFORMED_FRACTION: f64 = 0.10;

pub const TRADE_HEADER: [&str; 4] = ["instrument_id", "timestamp", "price", "volume"];
pub const BAR_HEADER: [&str; 5] = [
    "instrument_id",
    "date",
    "price",
    "log_return",
    "trade_count",
];

/// Instrument id used for the cross-instrument average series.
pub const POOLED_ID: &str = "POOLED";

#[derive(Debug, Error)]
pub enum MarketDataError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("unexpected header {found:?}, expected {expected:?}")]
    Header {
        found: Vec<String>,
        expected: Vec<String>,
    },
    #[error("{malformed} of {total} rows malformed (limit 10%)")]
    TooManyMalformed {
        malformed: usize,
        total: usize,
        rows: Vec<MalformedRow>,
    },
    #[error("zero valid rows")]
    NoValidRows,
    #[error("bars line {line}: {reason}")]
    BadBar { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub instrument_id: String,
    pub timestamp: DateTime<Utc>,
    /// Percent of par.
    pub price: f64,
    pub volume: Option<f64>,
    /// Trading date the trade is booked to (next trading day for weekend or
    /// holiday prints).
    pub trading_date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyBar {
    pub instrument_id: String,
    pub date: NaiveDate,
    pub price: f64,
    pub log_return: Option<f64>,
    pub trade_count: u32,
}

/// Bars keyed by instrument id, each series sorted by date.
pub type BarsByInstrument = BTreeMap<String, Vec<DailyBar>>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MalformedRow {
    /// 1-based line number in the source file (the header is line 1).
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct TradeIngest {
    pub records: Vec<TradeRecord>,
    pub malformed: Vec<MalformedRow>,
    pub total_rows: usize,
}

fn parse_trade_row(
    row: &csv::StringRecord,
    calendar: &TradingCalendar,
) -> Result<TradeRecord, String> {
    if row.len() != 4 {
        return Err(format!("expected 4 fields, got {}", row.len()));
    }
    let instrument_id = row[0].trim();
    if instrument_id.is_empty() {
        return Err("empty instrument_id".into());
    }
    let timestamp = DateTime::parse_from_rfc3339(row[1].trim())
        .map_err(|e| format!("bad timestamp {:?}: {e}", &row[1]))?
        .with_timezone(&Utc);
    let price: f64 = row[2]
        .trim()
        .parse()
        .map_err(|_| format!("bad price {:?}", &row[2]))?;
    if !(price.is_finite() && price > 0.0) {
        return Err(format!("price must be positive, got {price}"));
    }
    let volume = match row[3].trim() {
        "" => None,
        v => {
            let v: f64 = v.parse().map_err(|_| format!("bad volume {v:?}"))?;
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("volume must be nonnegative, got {v}"));
            }
            Some(v)
        }
    };
    let trading_date = calendar
        .on_or_after(timestamp.date_naive())
        .ok_or_else(|| format!("{} is after the last calendar day", timestamp.date_naive()))?;
    Ok(TradeRecord {
        instrument_id: instrument_id.to_string(),
        timestamp,
        price,
        volume,
        trading_date,
    })
}

/// Parses trade CSV from any reader. See [`ingest_trades`].
pub fn ingest_trades_from<R: Read>(
    reader: R,
    calendar: &TradingCalendar,
) -> Result<TradeIngest, MarketDataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::None)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header != TRADE_HEADER {
        return Err(MarketDataError::Header {
            found: header,
            expected: TRADE_HEADER.iter().map(|s| s.to_string()).collect(),
        });
    }
    let mut records = Vec::new();
    let mut malformed = Vec::new();
    let mut total_rows = 0;
    for (i, row) in rdr.records().enumerate() {
        total_rows += 1;
        let line = i + 2;
        match row {
            Ok(row) => match parse_trade_row(&row, calendar) {
                Ok(rec) => records.push(rec),
                Err(reason) => malformed.push(MalformedRow { line, reason }),
            },
            Err(e) => malformed.push(MalformedRow {
                line,
                reason: e.to_string(),
            }),
        }
    }
    if records.is_empty() {
        return Err(MarketDataError::NoValidRows);
    }
    if malformed.len() as f64 > MAX_MALFORMED_FRACTION * total_rows as f64 {
        return Err(MarketDataError::TooManyMalformed {
            malformed: malformed.len(),
            total: total_rows,
            rows: malformed,
        });
    }
    for m in &malformed {
        log::warn!("trade row {} malformed: {}", m.line, m.reason);
    }
    records.sort_by(|a, b| {
        a.instrument_id
            .cmp(&b.instrument_id)
            .then(a.timestamp.cmp(&b.timestamp))
            .then(a.price.total_cmp(&b.price))
    });
    Ok(TradeIngest {
        records,
        malformed,
        total_rows,
    })
}

/// Reads the trade CSV at `path`, booking each trade to a trading day of
/// `calendar`. Malformed rows are reported in the result; more than 10% of
/// them, or no valid rows at all, is fatal.
pub fn ingest_trades(
    path: &Path,
    calendar: &TradingCalendar,
) -> Result<TradeIngest, MarketDataError> {
    let file = File::open(path).map_err(|source| MarketDataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ingest_trades_from(io::BufReader::new(file), calendar)
}

fn trade_key(a: &TradeRecord, b: &TradeRecord) -> std::cmp::Ordering {
    a.timestamp
        .cmp(&b.timestamp)
        .then(a.price.total_cmp(&b.price))
        .then(
            a.volume
                .unwrap_or(-1.0)
                .total_cmp(&b.volume.unwrap_or(-1.0)),
        )
}

fn day_price(trades: &[&TradeRecord]) -> f64 {
    let all_volumes = trades.iter().all(|t| t.volume.is_some());
    let total_volume: f64 = trades.iter().filter_map(|t| t.volume).sum();
    if all_volumes && total_volume > 0.0 {
        trades
            .iter()
            .map(|t| t.price * t.volume.unwrap_or(0.0))
            .sum::<f64>()
            / total_volume
    } else {
        trades.iter().map(|t| t.price).sum::<f64>() / trades.len() as f64
    }
}

fn aggregate_instrument(id: &str, mut trades: Vec<&TradeRecord>) -> Vec<DailyBar> {
    // A total order on the trades makes the floating-point sums independent
    // of the input permutation.
    trades.sort_by(|a, b| a.trading_date.cmp(&b.trading_date).then(trade_key(a, b)));
    let mut bars: Vec<DailyBar> = Vec::new();
    let mut start = 0;
    while start < trades.len() {
        let date = trades[start].trading_date;
        let end = start
            + trades[start..]
                .iter()
                .take_while(|t| t.trading_date == date)
                .count();
        let price = day_price(&trades[start..end]);
        let log_return = bars.last().map(|prev| (price / prev.price).ln());
        bars.push(DailyBar {
            instrument_id: id.to_string(),
            date,
            price,
            log_return,
            trade_count: (end - start) as u32,
        });
        start = end;
    }
    bars
}

/// One bar per (instrument, trading date) with at least one trade.
pub fn daily_aggregate(trades: &[TradeRecord]) -> BarsByInstrument {
    let mut grouped: BTreeMap<&str, Vec<&TradeRecord>> = BTreeMap::new();
    for t in trades {
        grouped.entry(t.instrument_id.as_str()).or_default().push(t);
    }
    grouped
        .into_par_iter()
        .map(|(id, ts)| (id.to_string(), aggregate_instrument(id, ts)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Top `top_n` instruments by total trade count among those whose median
/// daily trade count is at least `min_trades_per_day`. Ties go to the
/// lexicographically smaller id.
pub fn liquidity_filter(
    bars: &BarsByInstrument,
    min_trades_per_day: u32,
    top_n: usize,
) -> Vec<String> {
    let mut eligible: Vec<(&str, u64)> = bars
        .iter()
        .filter(|(_, series)| !series.is_empty())
        .filter(|(_, series)| {
            let counts: Vec<f64> = series.iter().map(|b| f64::from(b.trade_count)).collect();
            crate::stats::percentile(&counts, 50.0) >= f64::from(min_trades_per_day)
        })
        .map(|(id, series)| {
            (
                id.as_str(),
                series.iter().map(|b| u64::from(b.trade_count)).sum(),
            )
        })
        .collect();
    eligible.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let out: Vec<String> = eligible
        .into_iter()
        .take(top_n.max(1))
        .map(|(id, _)| id.to_string())
        .collect();
    if out.is_empty() {
        log::warn!("no instrument reaches a median of {min_trades_per_day} trades per day");
    }
    out
}

/// Cross-instrument average series: per date, mean price over the instruments
/// trading that day and mean of the available log returns.
pub fn pooled_series(bars: &BarsByInstrument) -> Vec<DailyBar> {
    let mut by_date: BTreeMap<NaiveDate, (f64, usize, f64, usize, u32)> = BTreeMap::new();
    for series in bars.values() {
        for b in series {
            let e = by_date.entry(b.date).or_default();
            e.0 += b.price;
            e.1 += 1;
            if let Some(r) = b.log_return {
                e.2 += r;
                e.3 += 1;
            }
            e.4 += b.trade_count;
        }
    }
    by_date
        .into_iter()
        .map(|(date, (ps, pn, rs, rn, tc))| DailyBar {
            instrument_id: POOLED_ID.to_string(),
            date,
            price: ps / pn as f64,
            log_return: (rn > 0).then(|| rs / rn as f64),
            trade_count: tc,
        })
        .collect()
}

pub fn write_bars<W: Write>(w: W, bars: &BarsByInstrument) -> Result<(), MarketDataError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(BAR_HEADER)?;
    for series in bars.values() {
        for b in series {
            wtr.write_record([
                b.instrument_id.clone(),
                b.date.format("%Y-%m-%d").to_string(),
                b.price.to_string(),
                b.log_return.map(|r| r.to_string()).unwrap_or_default(),
                b.trade_count.to_string(),
            ])?;
        }
    }
    wtr.flush().map_err(|source| MarketDataError::Io {
        path: "<bars>".into(),
        source,
    })?;
    Ok(())
}

pub fn read_bars<R: Read>(r: R) -> Result<BarsByInstrument, MarketDataError> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != BAR_HEADER {
        return Err(MarketDataError::Header {
            found: header,
            expected: BAR_HEADER.iter().map(|s| s.to_string()).collect(),
        });
    }
    let mut out = BarsByInstrument::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let bad = |reason: String| MarketDataError::BadBar { line, reason };
        let date =
            NaiveDate::parse_from_str(&row[1], "%Y-%m-%d").map_err(|e| bad(e.to_string()))?;
        let price: f64 = row[2]
            .parse()
            .map_err(|_| bad(format!("price {:?}", &row[2])))?;
        let log_return = match &row[3] {
            "" => None,
            s => Some(s.parse().map_err(|_| bad(format!("log_return {s:?}")))?),
        };
        let trade_count = row[4]
            .parse()
            .map_err(|_| bad(format!("trade_count {:?}", &row[4])))?;
        out.entry(row[0].to_string()).or_default().push(DailyBar {
            instrument_id: row[0].to_string(),
            date,
            price,
            log_return,
            trade_count,
        });
    }
    for series in out.values_mut() {
        series.sort_by_key(|b| b.date);
    }
    Ok(out)
}

pub fn load_bars(path: &Path) -> Result<BarsByInstrument, MarketDataError> {
    let file = File::open(path).map_err(|source| MarketDataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_bars(io::BufReader::new(file))
}
