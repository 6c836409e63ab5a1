//! Signal-planted synthetic markets and news.
//!
//! A latent daily optimism factor `o_t ~ U(-1, 1)` pushes every bond's price
//! down the next day:
//!
//! ```text
//! x_{t+1} = φ x_t − γ o_t + σ ε,   price = 100 + x
//! ```
//!
//! A sentiment model with [`Orientation::Bond`] scores `−o_t` plus noise, so
//! its score predicts the next-day return with a positive sign; an
//! [`Orientation::Equity`] model scores `+o_t`. [`permuted_series`] destroys
//! the date alignment while keeping the score distribution.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::calendar::TradingCalendar;
use crate::market_data::{BarsByInstrument, DailyBar};
use crate::news::{article_id, RawArticle};
use crate::sentiment::io::write_probabilities;
use crate::sentiment::{ChunkProbabilities, DailyPoint, DailySentimentSeries};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig {
    pub instruments: usize,
    pub days: usize,
    pub start: NaiveDate,
    /// φ, mean reversion of the price deviation from par.
    pub persistence: f64,
    /// γ, next-day price impact of optimism.
    pub impact: f64,
    /// σ, idiosyncratic daily price noise.
    pub noise: f64,
    /// Probability that a trading day carries news.
    pub news_rate: f64,
    pub topics: Vec<String>,
}

impl Default for MarketConfig {
    fn default() -> Self {
        Self {
            instruments: 3,
            days: 260,
            start: NaiveDate::from_ymd_opt(2021, 1, 4).expect("valid date"),
            persistence: 0.9,
            impact: 0.4,
            noise: 0.1,
            news_rate: 0.85,
            topics: vec!["economy".into(), "politics".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMarket {
    pub config: MarketConfig,
    pub calendar: TradingCalendar,
    pub dates: Vec<NaiveDate>,
    pub optimism: Vec<f64>,
    pub news_days: Vec<bool>,
    pub bars: BarsByInstrument,
}

pub fn instrument_name(i: usize) -> String {
    format!("BOND{:02}", i + 1)
}

pub fn generate_market(config: &MarketConfig, seed: u64) -> SyntheticMarket {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let end = config.start + Duration::days((config.days as i64) * 2 + 14);
    let calendar = TradingCalendar::weekdays(config.start, end);
    let dates: Vec<NaiveDate> = calendar.iter().take(config.days).collect();
    let n = dates.len();
    let optimism: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let news_days: Vec<bool> = (0..n).map(|_| rng.gen_bool(config.news_rate)).collect();
    let mut bars = BTreeMap::new();
    for k in 0..config.instruments {
        let id = instrument_name(k);
        let mut x: f64 = 0.2 * rng.sample::<f64, _>(StandardNormal);
        let mut series: Vec<DailyBar> = Vec::with_capacity(n);
        for t in 0..n {
            let price = 100.0 + x;
            let log_return = series.last().map(|b: &DailyBar| (price / b.price).ln());
            series.push(DailyBar {
                instrument_id: id.clone(),
                date: dates[t],
                price,
                log_return,
                trade_count: rng.gen_range(3..8),
            });
            let eps: f64 = rng.sample(StandardNormal);
            x = config.persistence * x - config.impact * optimism[t] + config.noise * eps;
        }
        bars.insert(id, series);
    }
    let calendar = TradingCalendar::new(dates.iter().copied());
    SyntheticMarket {
        config: config.clone(),
        calendar,
        dates,
        optimism,
        news_days,
        bars,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// Scores `−o`: good news for bond holders.
    Bond,
    /// Scores `+o`: economic optimism.
    Equity,
}

fn oriented(o: f64, orientation: Orientation) -> f64 {
    match orientation {
        Orientation::Bond => -o,
        Orientation::Equity => o,
    }
}

/// Daily scores on news days only.
pub fn signal_series(
    market: &SyntheticMarket,
    model_id: &str,
    orientation: Orientation,
    score_noise: f64,
    seed: u64,
) -> DailySentimentSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = market
        .dates
        .iter()
        .zip(&market.optimism)
        .zip(&market.news_days)
        .filter(|(_, news)| **news)
        .map(|((date, o), _)| {
            let e: f64 = rng.sample(StandardNormal);
            DailyPoint {
                date: *date,
                score: (oriented(*o, orientation) + score_noise * e).clamp(-1.0, 1.0),
                article_count: 1,
                shock: 0,
            }
        })
        .collect();
    DailySentimentSeries {
        model_id: model_id.into(),
        topic: String::new(),
        points,
    }
}

/// Same dates and score multiset, scores shuffled across dates.
pub fn permuted_series(
    series: &DailySentimentSeries,
    model_id: &str,
    seed: u64,
) -> DailySentimentSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scores = series.scores();
    scores.shuffle(&mut rng);
    let mut out = series.clone();
    out.model_id = model_id.into();
    for (p, s) in out.points.iter_mut().zip(scores) {
        p.score = s;
    }
    out
}

/// Same dates, independent uniform noise scores.
pub fn noise_series(
    series: &DailySentimentSeries,
    model_id: &str,
    seed: u64,
) -> DailySentimentSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = series.clone();
    out.model_id = model_id.into();
    for p in &mut out.points {
        p.score = rng.gen_range(-1.0..1.0);
    }
    out
}

const WORDS: [&str; 24] = [
    "treasury",
    "yield",
    "auction",
    "inflation",
    "ministry",
    "budget",
    "growth",
    "deficit",
    "rating",
    "outlook",
    "investors",
    "demand",
    "spread",
    "curve",
    "central",
    "bank",
    "policy",
    "rates",
    "market",
    "coupon",
    "issuance",
    "liquidity",
    "forecast",
    "reserves",
];

fn body_text(rng: &mut ChaCha8Rng, chars: usize) -> String {
    let mut s = String::with_capacity(chars + 16);
    while s.len() < chars {
        if !s.is_empty() {
            s.push(' ');
        }
        s.push_str(WORDS[rng.gen_range(0..WORDS.len())]);
    }
    s.push('.');
    s
}

/// A generated article with the latent optimism of its publication day.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedArticle {
    pub raw: RawArticle,
    pub article_id: String,
    pub optimism: f64,
}

/// One to three articles per news day, plus a few short ones and exact
/// title duplicates for the cleaning rules to drop.
pub fn articles(market: &SyntheticMarket, seed: u64) -> Vec<PlantedArticle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (t, date) in market.dates.iter().enumerate() {
        if !market.news_days[t] {
            continue;
        }
        for k in 0..rng.gen_range(1..=3) {
            let topic = market.config.topics[rng.gen_range(0..market.config.topics.len())].clone();
            let title = format!("Bond desk bulletin {date} no. {}", k + 1);
            let chars = if rng.gen_bool(0.03) { 200 } else { 600 };
            let raw = RawArticle {
                title: title.clone(),
                date: format!("{date}T{:02}:15:00Z", 8 + k),
                topic,
                text: format!("<p>{}</p>", body_text(&mut rng, chars)),
            };
            out.push(PlantedArticle {
                article_id: article_id(&title),
                raw,
                optimism: market.optimism[t],
            });
            if rng.gen_bool(0.02) {
                let mut dup = out.last().expect("just pushed").clone();
                dup.raw.date = format!("{date}T23:59:00Z");
                out.push(dup);
            }
        }
    }
    out
}

/// How a synthetic model scores articles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScoringModel {
    Signal {
        orientation: Orientation,
        noise: f64,
    },
    /// Signal scores shuffled across articles.
    Permuted { noise: f64 },
}

/// Probabilities whose averaged-chunk NDI equals the intended article score:
/// `p_neutral = 0.2`, `p_positive = 0.4 (1 + s)`, `p_negative = 0.4 (1 − s)`.
pub fn probabilities_for_score(score: f64) -> (f64, f64, f64) {
    let s = score.clamp(-1.0, 1.0);
    (0.4 * (1.0 - s), 0.2, 0.4 * (1.0 + s))
}

/// Chunk-level probability records for each distinct article.
pub fn score_planted(
    articles: &[PlantedArticle],
    model_id: &str,
    model: ScoringModel,
    seed: u64,
) -> Vec<ChunkProbabilities> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::BTreeSet::new();
    let unique: Vec<&PlantedArticle> = articles
        .iter()
        .filter(|a| seen.insert(a.article_id.clone()))
        .collect();
    let noise = match model {
        ScoringModel::Signal { noise, .. } | ScoringModel::Permuted { noise } => noise,
    };
    let mut scores: Vec<f64> = unique
        .iter()
        .map(|a| {
            let base = match model {
                ScoringModel::Signal { orientation, .. } => oriented(a.optimism, orientation),
                ScoringModel::Permuted { .. } => -a.optimism,
            };
            let e: f64 = rng.sample(StandardNormal);
            (base + noise * e).clamp(-1.0, 1.0)
        })
        .collect();
    if matches!(model, ScoringModel::Permuted { .. }) {
        scores.shuffle(&mut rng);
    }
    let mut out = Vec::new();
    for (a, s) in unique.iter().zip(scores) {
        let chunks = rng.gen_range(1..=2u32);
        let jitter = if chunks == 2 {
            rng.gen_range(-0.05..0.05)
        } else {
            0.0
        };
        for c in 0..chunks {
            let sc = if c == 0 { s + jitter } else { s - jitter };
            let (p_negative, p_neutral, p_positive) = probabilities_for_score(sc);
            out.push(ChunkProbabilities {
                article_id: a.article_id.clone(),
                model_id: model_id.into(),
                chunk_index: c,
                p_negative,
                p_neutral,
                p_positive,
            });
        }
    }
    out
}

/// Trade prints whose daily VWAP reproduces each bar's price: the
/// first `k − 1` prints scatter around the bar price and the last one is
/// sized to close the gap.
pub fn write_trades_csv<W: Write>(w: W, market: &SyntheticMarket, seed: u64) -> csv::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = csv::Writer::from_writer(w);
    out.write_record(crate::market_data::TRADE_HEADER)?;
    for (id, bars) in &market.bars {
        for b in bars {
            let k = b.trade_count.max(2) as usize;
            let mut notional = 0.0;
            let mut volume = 0.0;
            for j in 0..k {
                let v = (rng.gen_range(1..20) * 100_000) as f64;
                let p = if j + 1 < k {
                    b.price + rng.gen_range(-0.05..0.05)
                } else {
                    let target = b.price * (volume + v);
                    (target - notional) / v
                };
                notional += p * v;
                volume += v;
                let ts = format!("{}T{:02}:{:02}:00Z", b.date, 9 + j / 2, (j % 2) * 30);
                out.write_record([id.as_str(), ts.as_str(), &p.to_string(), &v.to_string()])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub const SIGNAL_MODEL: &str = "bond-signal";
pub const PERMUTED_MODEL: &str = "permuted";

/// File names written by [`write_fixture_set`].
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSet {
    pub trades: PathBuf,
    pub calendar: PathBuf,
    pub articles: PathBuf,
    pub probabilities: Vec<PathBuf>,
    pub market: SyntheticMarket,
}

/// Writes trades, calendar, raw articles and one probability file per
/// synthetic model ([`SIGNAL_MODEL`] and [`PERMUTED_MODEL`]) into `dir`.
pub fn write_fixture_set(
    dir: &Path,
    config: &MarketConfig,
    seed: u64,
    score_noise: f64,
) -> std::io::Result<FixtureSet> {
    fs::create_dir_all(dir)?;
    let market = generate_market(config, seed);
    let planted = articles(&market, seed ^ 0xA1);

    let trades = dir.join("trades.csv");
    write_trades_csv(File::create(&trades)?, &market, seed ^ 0x7A)
        .map_err(std::io::Error::other)?;

    let calendar = dir.join("calendar.txt");
    fs::write(&calendar, market.calendar.to_text())?;

    let articles_path = dir.join("articles.jsonl");
    let mut w = BufWriter::new(File::create(&articles_path)?);
    for a in &planted {
        serde_json::to_writer(&mut w, &a.raw)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;

    let models = [
        (
            SIGNAL_MODEL,
            ScoringModel::Signal {
                orientation: Orientation::Bond,
                noise: score_noise,
            },
        ),
        (
            PERMUTED_MODEL,
            ScoringModel::Permuted { noise: score_noise },
        ),
    ];
    let mut probabilities = Vec::new();
    for (k, (id, model)) in models.into_iter().enumerate() {
        let path = dir.join(format!("probabilities_{id}.jsonl"));
        let chunks = score_planted(&planted, id, model, seed ^ (0x5C + k as u64));
        write_probabilities(BufWriter::new(File::create(&path)?), &chunks)
            .map_err(std::io::Error::other)?;
        probabilities.push(path);
    }
    Ok(FixtureSet {
        trades,
        calendar,
        articles: articles_path,
        probabilities,
        market,
    })
}
