//! News article cleaning, trading-date alignment and chronological splits.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use chrono::{DateTime, NaiveDate};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::calendar::TradingCalendar;

/// Minimum cleaned body length, in characters.
pub const MIN_BODY_CHARS: usize = 500;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Json { line: usize, message: String },
    #[error("split boundaries must be strictly increasing: {0:?}")]
    Boundaries([NaiveDate; 3]),
}

/// One input record as delivered by the acquisition step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawArticle {
    pub title: String,
    pub date: String,
    #[serde(default)]
    pub topic: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub article_id: String,
    pub title: String,
    #[serde(rename = "date")]
    pub published: NaiveDate,
    pub topic: String,
    #[serde(rename = "text")]
    pub body: String,
    pub aligned_date: NaiveDate,
}

impl Article {
    pub fn to_raw(&self) -> RawArticle {
        RawArticle {
            title: self.title.clone(),
            date: self.published.format("%Y-%m-%d").to_string(),
            topic: self.topic.clone(),
            text: self.body.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CleaningReport {
    pub input: usize,
    pub unparseable_date: usize,
    pub outside_calendar: usize,
    pub blocklisted_topic: usize,
    pub too_short: usize,
    pub duplicate: usize,
    pub kept: usize,
}

impl CleaningReport {
    fn rows(&self) -> [(&'static str, usize); 7] {
        [
            ("input", self.input),
            ("unparseable_date", self.unparseable_date),
            ("outside_calendar", self.outside_calendar),
            ("blocklisted_topic", self.blocklisted_topic),
            ("too_short", self.too_short),
            ("duplicate", self.duplicate),
            ("kept", self.kept),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("reason,count\n");
        for (k, v) in self.rows() {
            s.push_str(&format!("{k},{v}\n"));
        }
        s
    }
}

impl fmt::Display for CleaningReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Corpus cleaning report")?;
        for (k, v) in self.rows() {
            writeln!(f, "  {k:<18} {v:>8}")?;
        }
        Ok(())
    }
}

/// Lowercase, punctuation stripped, whitespace collapsed.
pub fn normalize_title(title: &str) -> String {
    let kept: String = title
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Stable key derived from the normalised title.
pub fn article_id(title: &str) -> String {
    let digest = Sha256::digest(normalize_title(title).as_bytes());
    hex::encode(&digest[..8])
}

fn strip_tags_once(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(start) = rest.find('<') {
        let after = &rest[start + 1..];
        let looks_like_tag = after
            .chars()
            .next()
            .is_some_and(|c| c.is_ascii_alphabetic() || c == '/' || c == '!');
        match (looks_like_tag, after.find(['<', '>'])) {
            (true, Some(end)) if after.as_bytes()[end] == b'>' => {
                out.push_str(&rest[..start]);
                if !out.ends_with('<') {
                    out.push(' ');
                }
                rest = &after[end + 1..];
            }
            _ => {
                out.push_str(&rest[..=start]);
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Removes markup tags and collapses whitespace. Idempotent.
pub fn clean_body(text: &str) -> String {
    let mut cur = text.to_string();
    loop {
        let next = strip_tags_once(&cur);
        if next == cur {
            break;
        }
        cur = next;
    }
    cur.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Accepts `YYYY-MM-DD`, RFC 3339 timestamps, or a date-time with a space
/// separator. Timestamps keep their local calendar date.
pub fn parse_published(text: &str) -> Option<NaiveDate> {
    let t = text.trim();
    if let Ok(d) = NaiveDate::parse_from_str(t, "%Y-%m-%d") {
        return Some(d);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(t) {
        return Some(dt.date_naive());
    }
    if let Some(prefix) = t.get(..10) {
        if t.len() > 10 && matches!(t.as_bytes()[10], b' ' | b'T') {
            return NaiveDate::parse_from_str(prefix, "%Y-%m-%d").ok();
        }
    }
    None
}

/// Filters and aligns raw articles: bad dates, dates past the calendar,
/// blocklisted topics and short bodies are dropped, then duplicate titles are
/// collapsed keeping the earliest publication. Output is sorted by
/// (aligned_date, article_id).
pub fn clean_corpus<I>(
    raw: I,
    topic_blocklist: &HashSet<String>,
    calendar: &TradingCalendar,
) -> (Vec<Article>, CleaningReport)
where
    I: IntoIterator<Item = RawArticle>,
{
    let blocklist: HashSet<String> = topic_blocklist
        .iter()
        .map(|t| t.trim().to_lowercase())
        .collect();
    let mut report = CleaningReport::default();
    let mut by_id: HashMap<String, Article> = HashMap::new();
    for rec in raw {
        report.input += 1;
        let Some(published) = parse_published(&rec.date) else {
            report.unparseable_date += 1;
            continue;
        };
        let Some(aligned_date) = calendar.on_or_after(published) else {
            report.outside_calendar += 1;
            continue;
        };
        let topic = rec.topic.trim().to_string();
        if blocklist.contains(&topic.to_lowercase()) {
            report.blocklisted_topic += 1;
            continue;
        }
        let body = clean_body(&rec.text);
        if body.chars().count() < MIN_BODY_CHARS {
            report.too_short += 1;
            continue;
        }
        let title = rec.title.trim().to_string();
        let article = Article {
            article_id: article_id(&title),
            title,
            published,
            topic,
            body,
            aligned_date,
        };
        match by_id.get_mut(&article.article_id) {
            Some(existing) => {
                report.duplicate += 1;
                let earlier = (article.published, &article.title, &article.body)
                    < (existing.published, &existing.title, &existing.body);
                if earlier {
                    *existing = article;
                }
            }
            None => {
                by_id.insert(article.article_id.clone(), article);
            }
        }
    }
    let mut articles: Vec<Article> = by_id.into_values().collect();
    articles.sort_by(|a, b| {
        a.aligned_date
            .cmp(&b.aligned_date)
            .then(a.article_id.cmp(&b.article_id))
    });
    report.kept = articles.len();
    (articles, report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Validation,
    Test,
    Evaluation,
}

/// Half-open chronological partitions:
/// train `< b0 ≤` validation `< b1 ≤` test `< b2 ≤` evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBoundaries([NaiveDate; 3]);

impl SplitBoundaries {
    pub fn new(
        validation_start: NaiveDate,
        test_start: NaiveDate,
        evaluation_start: NaiveDate,
    ) -> Result<Self, CorpusError> {
        let b = [validation_start, test_start, evaluation_start];
        if b[0] < b[1] && b[1] < b[2] {
            Ok(Self(b))
        } else {
            Err(CorpusError::Boundaries(b))
        }
    }

    pub fn partition_of(&self, date: NaiveDate) -> Partition {
        if date < self.0[0] {
            Partition::Train
        } else if date < self.0[1] {
            Partition::Validation
        } else if date < self.0[2] {
            Partition::Test
        } else {
            Partition::Evaluation
        }
    }

    pub fn dates(&self) -> [NaiveDate; 3] {
        self.0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusSplit {
    pub train: Vec<Article>,
    pub validation: Vec<Article>,
    pub test: Vec<Article>,
    pub evaluation: Vec<Article>,
}

impl CorpusSplit {
    pub fn total(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len() + self.evaluation.len()
    }

    pub fn get(&self, p: Partition) -> &[Article] {
        match p {
            Partition::Train => &self.train,
            Partition::Validation => &self.validation,
            Partition::Test => &self.test,
            Partition::Evaluation => &self.evaluation,
        }
    }
}

pub fn chronological_split(articles: &[Article], boundaries: SplitBoundaries) -> CorpusSplit {
    let mut split = CorpusSplit::default();
    for a in articles {
        let bucket = match boundaries.partition_of(a.aligned_date) {
            Partition::Train => &mut split.train,
            Partition::Validation => &mut split.validation,
            Partition::Test => &mut split.test,
            Partition::Evaluation => &mut split.evaluation,
        };
        bucket.push(a.clone());
    }
    for p in [
        Partition::Train,
        Partition::Validation,
        Partition::Test,
        Partition::Evaluation,
    ] {
        if split.get(p).is_empty() && !articles.is_empty() {
            log::warn!("partition {p:?} is empty");
        }
    }
    split
}

/// Reads raw article JSON-lines. Blank lines are skipped.
pub fn read_raw_jsonl<R: BufRead>(r: R) -> Result<Vec<RawArticle>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawArticle = serde_json::from_str(&line).map_err(|e| CorpusError::Json {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_corpus_jsonl<R: BufRead>(r: R) -> Result<Vec<Article>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CorpusError::Json {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_corpus_jsonl<W: Write>(mut w: W, articles: &[Article]) -> Result<(), CorpusError> {
    for a in articles {
        let line = serde_json::to_string(a).map_err(|e| CorpusError::Json {
            line: 0,
            message: e.to_string(),
        })?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Topic and date lookup keyed by article id.
pub fn index_by_id(articles: &[Article]) -> BTreeMap<&str, &Article> {
    articles
        .iter()
        .map(|a| (a.article_id.as_str(), a))
        .collect()
}
