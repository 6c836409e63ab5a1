//! Article and daily sentiment scores.
//!
//! Three-class probabilities are turned into a continuous score with the
//! normalised difference index `(p+ - p-) / (p+ + p-)`, which ignores the
//! neutral mass entirely. Long articles are scored per chunk and the chunk
//! probabilities are averaged before the index is applied.

pub mod io;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::NaiveDate;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::news::Article;
use crate::stats;

/// Tolerance on the three class probabilities summing to one.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_BIN_THRESHOLD: f64 = 0.1;
pub const DEFAULT_SHOCK_PERCENTILE: f64 = 10.0;
pub const MIN_SHOCK_POINTS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SentimentError {
    #[error("invalid probability {field}={value} for {article_id}")]
    InvalidProbability {
        article_id: String,
        field: &'static str,
        value: f64,
    },
    #[error("probabilities for {article_id} chunk {chunk_index} sum to {sum}")]
    NotSimplex {
        article_id: String,
        chunk_index: u32,
        sum: f64,
    },
    #[error("no chunks supplied")]
    NoChunks,
    #[error("article {article_id}: chunk indices not dense, missing {missing}")]
    ChunkGap { article_id: String, missing: u32 },
    #[error("article {article_id}: duplicate chunk index {index}")]
    DuplicateChunk { article_id: String, index: u32 },
    #[error("chunks mix articles or models ({0} and {1})")]
    MixedChunks(String, String),
    #[error("score {0} outside [-1, 1]")]
    ScoreOutOfRange(f64),
    #[error("threshold {0} outside (0, 1)")]
    BadThreshold(f64),
    #[error("empty class in labelled data: {0}")]
    EmptyClass(ClassCounts),
    #[error("percentile {0} outside (0, 50)")]
    BadPercentile(f64),
    #[error("need at least {required} daily points for shock detection, got {got}")]
    TooFewPoints { required: usize, got: usize },
}

/// Result of the normalised difference index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ndi {
    pub score: f64,
    /// Both polar probabilities were zero; the score is defined as 0.
    pub degenerate: bool,
}

/// `(p_positive - p_negative) / (p_positive + p_negative)`.
pub fn ndi(p_positive: f64, p_negative: f64) -> Result<Ndi, SentimentError> {
    for (field, value) in [("p_positive", p_positive), ("p_negative", p_negative)] {
        if !(value.is_finite() && value >= 0.0) {
            return Err(SentimentError::InvalidProbability {
                article_id: String::new(),
                field,
                value,
            });
        }
    }
    let denom = p_positive + p_negative;
    if denom == 0.0 {
        return Ok(Ndi {
            score: 0.0,
            degenerate: true,
        });
    }
    Ok(Ndi {
        score: ((p_positive - p_negative) / denom).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkProbabilities {
    pub article_id: String,
    #[serde(default)]
    pub model_id: String,
    pub chunk_index: u32,
    pub p_negative: f64,
    pub p_neutral: f64,
    pub p_positive: f64,
}

impl ChunkProbabilities {
    pub fn validate(&self) -> Result<(), SentimentError> {
        for (field, value) in [
            ("p_negative", self.p_negative),
            ("p_neutral", self.p_neutral),
            ("p_positive", self.p_positive),
        ] {
            if !(value.is_finite() && (0.0..=1.0).contains(&value)) {
                return Err(SentimentError::InvalidProbability {
                    article_id: self.article_id.clone(),
                    field,
                    value,
                });
            }
        }
        let sum = self.p_negative + self.p_neutral + self.p_positive;
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(SentimentError::NotSimplex {
                article_id: self.article_id.clone(),
                chunk_index: self.chunk_index,
                sum,
            });
        }
        Ok(())
    }
}

/// How per-chunk outputs are combined into one article score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkAggregation {
    /// Average the class probabilities, then apply the index.
    #[default]
    AverageProbabilities,
    /// Apply the index per chunk, then average the scores.
    AverageScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleScore {
    pub article_id: String,
    pub model_id: String,
    pub score: f64,
    pub degenerate: bool,
    pub n_chunks: usize,
}

/// Combines all chunks of one article (one model) into a single score.
/// Chunks may arrive in any order but their indices must be dense from 0.
pub fn aggregate_chunks(
    chunks: &[ChunkProbabilities],
    mode: ChunkAggregation,
) -> Result<ArticleScore, SentimentError> {
    let first = chunks.first().ok_or(SentimentError::NoChunks)?;
    let mut sorted: Vec<&ChunkProbabilities> = chunks.iter().collect();
    sorted.sort_by_key(|c| c.chunk_index);
    for (expected, c) in sorted.iter().enumerate() {
        if c.article_id != first.article_id || c.model_id != first.model_id {
            return Err(SentimentError::MixedChunks(
                format!("{}/{}", first.article_id, first.model_id),
                format!("{}/{}", c.article_id, c.model_id),
            ));
        }
        c.validate()?;
        let expected = expected as u32;
        if c.chunk_index != expected {
            return Err(if c.chunk_index < expected {
                SentimentError::DuplicateChunk {
                    article_id: c.article_id.clone(),
                    index: c.chunk_index,
                }
            } else {
                SentimentError::ChunkGap {
                    article_id: c.article_id.clone(),
                    missing: expected,
                }
            });
        }
    }
    let n = sorted.len() as f64;
    let (score, degenerate) = match mode {
        ChunkAggregation::AverageProbabilities => {
            let p_pos = sorted.iter().map(|c| c.p_positive).sum::<f64>() / n;
            let p_neg = sorted.iter().map(|c| c.p_negative).sum::<f64>() / n;
            let r = ndi(p_pos, p_neg)?;
            (r.score, r.degenerate)
        }
        ChunkAggregation::AverageScores => {
            let mut total = 0.0;
            let mut all_degenerate = true;
            for c in &sorted {
                let r = ndi(c.p_positive, c.p_negative)?;
                total += r.score;
                all_degenerate &= r.degenerate;
            }
            (total / n, all_degenerate)
        }
    };
    Ok(ArticleScore {
        article_id: first.article_id.clone(),
        model_id: first.model_id.clone(),
        score,
        degenerate,
        n_chunks: sorted.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentRecord {
    pub article_id: String,
    pub model_id: String,
    pub score: f64,
    pub aligned_date: NaiveDate,
    pub topic: String,
}

/// Outcome of scoring a probability stream against a corpus.
#[derive(Debug, Clone, Default)]
pub struct ScoringOutcome {
    pub records: Vec<SentimentRecord>,
    /// Articles whose chunks failed aggregation, with the reason.
    pub rejected: Vec<(String, String, SentimentError)>,
    /// (model, article) pairs with no article in the corpus.
    pub unknown_articles: usize,
    pub degenerate: usize,
}

/// Groups chunks per (model, article), aggregates them and attaches the
/// article's trading date and topic. Output is sorted by
/// (model, date, article).
pub fn score_articles(
    chunks: &[ChunkProbabilities],
    corpus: &[Article],
    mode: ChunkAggregation,
) -> ScoringOutcome {
    let index = crate::news::index_by_id(corpus);
    let mut groups: BTreeMap<(&str, &str), Vec<ChunkProbabilities>> = BTreeMap::new();
    for c in chunks {
        groups
            .entry((c.model_id.as_str(), c.article_id.as_str()))
            .or_default()
            .push(c.clone());
    }
    let mut out = ScoringOutcome::default();
    for ((model, article_id), group) in groups {
        let Some(article) = index.get(article_id) else {
            out.unknown_articles += 1;
            continue;
        };
        match aggregate_chunks(&group, mode) {
            Ok(s) => {
                out.degenerate += usize::from(s.degenerate);
                out.records.push(SentimentRecord {
                    article_id: s.article_id,
                    model_id: s.model_id,
                    score: s.score,
                    aligned_date: article.aligned_date,
                    topic: article.topic.clone(),
                });
            }
            Err(e) => out
                .rejected
                .push((model.to_string(), article_id.to_string(), e)),
        }
    }
    out.records.sort_by(|a, b| {
        (a.model_id.as_str(), a.aligned_date, a.article_id.as_str()).cmp(&(
            b.model_id.as_str(),
            b.aligned_date,
            b.article_id.as_str(),
        ))
    });
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentimentClass {
    Negative,
    Neutral,
    Positive,
}

impl SentimentClass {
    pub const ALL: [SentimentClass; 3] = [Self::Negative, Self::Neutral, Self::Positive];
}

impl fmt::Display for SentimentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Negative => "negative",
            Self::Neutral => "neutral",
            Self::Positive => "positive",
        })
    }
}

/// Scores strictly beyond ±threshold are polar; the boundary is neutral.
pub fn bin_label(score: f64, threshold: f64) -> Result<SentimentClass, SentimentError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(SentimentError::BadThreshold(threshold));
    }
    if !(-1.0..=1.0).contains(&score) {
        return Err(SentimentError::ScoreOutOfRange(score));
    }
    Ok(if score < -threshold {
        SentimentClass::Negative
    } else if score > threshold {
        SentimentClass::Positive
    } else {
        SentimentClass::Neutral
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub negative: usize,
    pub neutral: usize,
    pub positive: usize,
}

impl fmt::Display for ClassCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "negative={} neutral={} positive={}",
            self.negative, self.neutral, self.positive
        )
    }
}

impl ClassCounts {
    pub fn of<'a>(classes: impl IntoIterator<Item = &'a SentimentClass>) -> Self {
        let mut c = Self::default();
        for class in classes {
            *c.get_mut(*class) += 1;
        }
        c
    }

    pub fn get(&self, class: SentimentClass) -> usize {
        match class {
            SentimentClass::Negative => self.negative,
            SentimentClass::Neutral => self.neutral,
            SentimentClass::Positive => self.positive,
        }
    }

    fn get_mut(&mut self, class: SentimentClass) -> &mut usize {
        match class {
            SentimentClass::Negative => &mut self.negative,
            SentimentClass::Neutral => &mut self.neutral,
            SentimentClass::Positive => &mut self.positive,
        }
    }
}

/// Downsamples every class to the minority-class count, uniformly without
/// replacement. Selected items keep their input order.
pub fn stratified_undersample<T: Clone>(
    labelled: &[(T, SentimentClass)],
    seed: u64,
) -> Result<Vec<(T, SentimentClass)>, SentimentError> {
    let counts = ClassCounts::of(labelled.iter().map(|(_, c)| c));
    if SentimentClass::ALL.iter().any(|c| counts.get(*c) == 0) {
        return Err(SentimentError::EmptyClass(counts));
    }
    let target = SentimentClass::ALL
        .iter()
        .map(|c| counts.get(*c))
        .min()
        .unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = BTreeSet::new();
    for class in SentimentClass::ALL {
        let members: Vec<usize> = labelled
            .iter()
            .enumerate()
            .filter(|(_, (_, c))| *c == class)
            .map(|(i, _)| i)
            .collect();
        for j in sample(&mut rng, members.len(), target).iter() {
            keep.insert(members[j]);
        }
    }
    Ok(keep.into_iter().map(|i| labelled[i].clone()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyPoint {
    pub date: NaiveDate,
    pub score: f64,
    pub article_count: usize,
    /// -1 negative shock, +1 positive shock, 0 otherwise.
    pub shock: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySentimentSeries {
    pub model_id: String,
    pub topic: String,
    pub points: Vec<DailyPoint>,
}

impl DailySentimentSeries {
    pub fn scores(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.score).collect()
    }

    pub fn score_on(&self, date: NaiveDate) -> Option<f64> {
        self.points
            .binary_search_by_key(&date, |p| p.date)
            .ok()
            .map(|i| self.points[i].score)
    }

    pub fn shock_count(&self) -> usize {
        self.points.iter().filter(|p| p.shock != 0).count()
    }
}

/// Mean article score per trading date for one (model, topic). An empty
/// `topic` selects every topic.
pub fn daily_series(
    records: &[SentimentRecord],
    model_id: &str,
    topic: &str,
) -> DailySentimentSeries {
    let mut by_date: BTreeMap<NaiveDate, Vec<(&str, f64)>> = BTreeMap::new();
    for r in records
        .iter()
        .filter(|r| r.model_id == model_id && (topic.is_empty() || r.topic == topic))
    {
        by_date
            .entry(r.aligned_date)
            .or_default()
            .push((r.article_id.as_str(), r.score));
    }
    let points = by_date
        .into_iter()
        .map(|(date, mut scores)| {
            scores.sort_by(|a, b| a.0.cmp(b.0).then(a.1.total_cmp(&b.1)));
            let sum: f64 = scores.iter().map(|s| s.1).sum();
            DailyPoint {
                date,
                score: sum / scores.len() as f64,
                article_count: scores.len(),
                shock: 0,
            }
        })
        .collect();
    DailySentimentSeries {
        model_id: model_id.to_string(),
        topic: topic.to_string(),
        points,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShockThresholds {
    pub lower: f64,
    pub upper: f64,
}

impl ShockThresholds {
    pub fn from_scores(scores: &[f64], percentile: f64) -> Result<Self, SentimentError> {
        if !(percentile > 0.0 && percentile < 50.0) {
            return Err(SentimentError::BadPercentile(percentile));
        }
        if scores.len() < MIN_SHOCK_POINTS {
            return Err(SentimentError::TooFewPoints {
                required: MIN_SHOCK_POINTS,
                got: scores.len(),
            });
        }
        let mut sorted = scores.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            lower: stats::percentile_sorted(&sorted, percentile),
            upper: stats::percentile_sorted(&sorted, 100.0 - percentile),
        })
    }

    /// Coinciding thresholds (a constant series) flag nothing.
    pub fn classify(&self, score: f64) -> i8 {
        if self.upper <= self.lower {
            0
        } else if score >= self.upper {
            1
        } else if score <= self.lower {
            -1
        } else {
            0
        }
    }
}

pub fn apply_thresholds(
    series: &DailySentimentSeries,
    thresholds: ShockThresholds,
) -> DailySentimentSeries {
    let mut out = series.clone();
    for p in &mut out.points {
        p.shock = thresholds.classify(p.score);
    }
    out
}

/// Flags dates in the top and bottom `percentile` of the series' own scores.
pub fn detect_shocks(
    series: &DailySentimentSeries,
    percentile: f64,
) -> Result<DailySentimentSeries, SentimentError> {
    let thresholds = ShockThresholds::from_scores(&series.scores(), percentile)?;
    Ok(apply_thresholds(series, thresholds))
}

/// Thresholds computed over the union of several series' scores.
pub fn pooled_thresholds(
    series: &[DailySentimentSeries],
    percentile: f64,
) -> Result<ShockThresholds, SentimentError> {
    let all: Vec<f64> = series.iter().flat_map(|s| s.scores()).collect();
    ShockThresholds::from_scores(&all, percentile)
}
