//! File formats for probabilities, continuous labels and daily series.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ChunkProbabilities, DailyPoint, DailySentimentSeries, SentimentRecord};

pub const DAILY_HEADER: [&str; 6] = [
    "model_id",
    "topic",
    "date",
    "score",
    "article_count",
    "shock",
];

#[derive(Debug, Error)]
pub enum SentimentIoError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

/// Parsed probability file plus every schema violation found.
#[derive(Debug, Clone, Default)]
pub struct ProbabilityFile {
    pub records: Vec<ChunkProbabilities>,
    pub errors: Vec<LineError>,
}

impl ProbabilityFile {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }

    /// Distinct article count per model.
    pub fn articles_per_model(&self) -> BTreeMap<String, usize> {
        let mut seen: BTreeMap<String, BTreeSet<&str>> = BTreeMap::new();
        for r in &self.records {
            seen.entry(r.model_id.clone())
                .or_default()
                .insert(&r.article_id);
        }
        seen.into_iter().map(|(k, v)| (k, v.len())).collect()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProbabilityLine {
    article_id: String,
    model_id: String,
    chunk_index: u32,
    p_negative: f64,
    p_neutral: f64,
    p_positive: f64,
}

/// Reads and validates probability JSON-lines: every field present, each
/// triple on the simplex, and chunk indices dense from 0 per (model, article).
pub fn read_probabilities<R: BufRead>(r: R) -> Result<ProbabilityFile, SentimentIoError> {
    let mut out = ProbabilityFile::default();
    let mut indices: BTreeMap<(String, String), Vec<(u32, usize)>> = BTreeMap::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ProbabilityLine = match serde_json::from_str(&line) {
            Ok(p) => p,
            Err(e) => {
                out.errors.push(LineError {
                    line: lineno,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let rec = ChunkProbabilities {
            article_id: parsed.article_id,
            model_id: parsed.model_id,
            chunk_index: parsed.chunk_index,
            p_negative: parsed.p_negative,
            p_neutral: parsed.p_neutral,
            p_positive: parsed.p_positive,
        };
        if rec.article_id.is_empty() || rec.model_id.is_empty() {
            out.errors.push(LineError {
                line: lineno,
                message: "empty article_id or model_id".into(),
            });
            continue;
        }
        if let Err(e) = rec.validate() {
            out.errors.push(LineError {
                line: lineno,
                message: e.to_string(),
            });
            continue;
        }
        indices
            .entry((rec.model_id.clone(), rec.article_id.clone()))
            .or_default()
            .push((rec.chunk_index, lineno));
        out.records.push(rec);
    }
    for ((model, article), mut idx) in indices {
        idx.sort();
        for (expected, (got, lineno)) in idx.iter().enumerate() {
            if *got != expected as u32 {
                out.errors.push(LineError {
                    line: *lineno,
                    message: format!("{model}/{article}: chunk index {got}, expected {expected}"),
                });
                break;
            }
        }
    }
    out.errors.sort_by_key(|e| e.line);
    Ok(out)
}

pub fn write_probabilities<W: Write>(
    mut w: W,
    chunks: &[ChunkProbabilities],
) -> Result<(), SentimentIoError> {
    for c in chunks {
        let line = serde_json::to_string(c).map_err(|e| SentimentIoError::Line {
            line: 0,
            message: e.to_string(),
        })?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelParseError {
    #[error("response is not a bare number: {0:?}")]
    NotANumber(String),
    #[error("score {0} outside [-1, 1]")]
    OutOfRange(f64),
}

/// Parses a labeller response that must be exactly one float in [-1, 1],
/// e.g. `0.2`, `-1.00` or `+0.35`. Surrounding whitespace is allowed,
/// anything else is not.
pub fn parse_label_response(text: &str) -> Result<f64, LabelParseError> {
    let t = text.trim();
    let digits = t.strip_prefix(['+', '-']).unwrap_or(t);
    let (int, frac) = match digits.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (digits, None),
    };
    let well_formed = !int.is_empty()
        && int.bytes().all(|b| b.is_ascii_digit())
        && frac.is_none_or(|f| !f.is_empty() && f.bytes().all(|b| b.is_ascii_digit()));
    if !well_formed {
        return Err(LabelParseError::NotANumber(text.to_string()));
    }
    let v: f64 = t
        .parse()
        .map_err(|_| LabelParseError::NotANumber(text.to_string()))?;
    if !(-1.0..=1.0).contains(&v) {
        return Err(LabelParseError::OutOfRange(v));
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousLabel {
    pub article_id: String,
    pub score: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawScore {
    Number(f64),
    Text(String),
}

#[derive(Deserialize)]
struct LabelLine {
    article_id: String,
    score: RawScore,
}

/// Continuous-label JSON-lines. `score` may be a number or the labeller's raw
/// text response; both must satisfy [`parse_label_response`].
pub fn read_labels<R: BufRead>(
    r: R,
) -> Result<(Vec<ContinuousLabel>, Vec<LineError>), SentimentIoError> {
    let mut labels = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Result<LabelLine, _> = serde_json::from_str(&line);
        let result = match parsed {
            Ok(LabelLine { article_id, score }) => {
                let score = match score {
                    RawScore::Number(v) if (-1.0..=1.0).contains(&v) => Ok(v),
                    RawScore::Number(v) => Err(LabelParseError::OutOfRange(v).to_string()),
                    RawScore::Text(t) => parse_label_response(&t).map_err(|e| e.to_string()),
                };
                score.map(|score| ContinuousLabel { article_id, score })
            }
            Err(e) => Err(e.to_string()),
        };
        match result {
            Ok(l) => labels.push(l),
            Err(message) => errors.push(LineError {
                line: i + 1,
                message,
            }),
        }
    }
    Ok((labels, errors))
}

pub fn write_records_csv<W: Write>(
    w: W,
    records: &[SentimentRecord],
) -> Result<(), SentimentIoError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["article_id", "model_id", "date", "topic", "score"])?;
    for r in records {
        wtr.write_record([
            r.article_id.clone(),
            r.model_id.clone(),
            r.aligned_date.format("%Y-%m-%d").to_string(),
            r.topic.clone(),
            r.score.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_records_csv<R: Read>(r: R) -> Result<Vec<SentimentRecord>, SentimentIoError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = |m: String| SentimentIoError::Line {
            line: i + 2,
            message: m,
        };
        out.push(SentimentRecord {
            article_id: row[0].to_string(),
            model_id: row[1].to_string(),
            aligned_date: NaiveDate::parse_from_str(&row[2], "%Y-%m-%d")
                .map_err(|e| bad(e.to_string()))?,
            topic: row[3].to_string(),
            score: row[4]
                .parse()
                .map_err(|_| bad(format!("score {:?}", &row[4])))?,
        });
    }
    Ok(out)
}

pub fn write_daily_csv<W: Write>(
    w: W,
    series: &[DailySentimentSeries],
) -> Result<(), SentimentIoError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(DAILY_HEADER)?;
    for s in series {
        for p in &s.points {
            wtr.write_record([
                s.model_id.clone(),
                s.topic.clone(),
                p.date.format("%Y-%m-%d").to_string(),
                p.score.to_string(),
                p.article_count.to_string(),
                p.shock.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Reads the daily series export back into one series per (model, topic),
/// in (model, topic) order.
pub fn read_daily_csv<R: Read>(r: R) -> Result<Vec<DailySentimentSeries>, SentimentIoError> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != DAILY_HEADER {
        return Err(SentimentIoError::Line {
            line: 1,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut map: BTreeMap<(String, String), Vec<DailyPoint>> = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = |m: String| SentimentIoError::Line {
            line: i + 2,
            message: m,
        };
        let point = DailyPoint {
            date: NaiveDate::parse_from_str(&row[2], "%Y-%m-%d").map_err(|e| bad(e.to_string()))?,
            score: row[3]
                .parse()
                .map_err(|_| bad(format!("score {:?}", &row[3])))?,
            article_count: row[4]
                .parse()
                .map_err(|_| bad(format!("article_count {:?}", &row[4])))?,
            shock: row[5]
                .parse()
                .map_err(|_| bad(format!("shock {:?}", &row[5])))?,
        };
        if !(-1..=1).contains(&point.shock) {
            return Err(bad(format!("shock {} not in -1, 0, 1", point.shock)));
        }
        map.entry((row[0].to_string(), row[1].to_string()))
            .or_default()
            .push(point);
    }
    Ok(map
        .into_iter()
        .map(|((model_id, topic), mut points)| {
            points.sort_by_key(|p| p.date);
            DailySentimentSeries {
                model_id,
                topic,
                points,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_responses() {
        assert_eq!(parse_label_response("0.2"), Ok(0.2));
        assert_eq!(parse_label_response(" -1.00\n"), Ok(-1.0));
        assert_eq!(parse_label_response("+0.35"), Ok(0.35));
        assert_eq!(parse_label_response("1"), Ok(1.0));
        assert!(matches!(
            parse_label_response("prices will rise, 0.5"),
            Err(LabelParseError::NotANumber(_))
        ));
        assert_eq!(
            parse_label_response("1.5"),
            Err(LabelParseError::OutOfRange(1.5))
        );
        for bad in ["", ".5", "5.", "1e-1", "NaN", "inf", "0.2 0.3", "--0.1"] {
            assert!(parse_label_response(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn probability_validation() {
        let text = r#"{"article_id":"a","model_id":"m","chunk_index":0,"p_negative":0.2,"p_neutral":0.2,"p_positive":0.6}
{"article_id":"a","model_id":"m","chunk_index":2,"p_negative":0.2,"p_neutral":0.2,"p_positive":0.6}
{"article_id":"b","model_id":"m","chunk_index":0,"p_negative":0.5,"p_neutral":0.5,"p_positive":0.5}
{"article_id":"c","model_id":"m","chunk_index":0,"p_negative":0.5}

{"article_id":"d","model_id":"m","chunk_index":0,"p_negative":0.1,"p_neutral":0.1,"p_positive":0.8}
"#;
        let f = read_probabilities(text.as_bytes()).unwrap();
        assert_eq!(f.records.len(), 3);
        let lines: Vec<usize> = f.errors.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![2, 3, 4]);
        assert!(!f.is_valid());
        assert_eq!(f.articles_per_model()["m"], 2);
    }

    #[test]
    fn probability_round_trip() {
        let chunks = vec![ChunkProbabilities {
            article_id: "a".into(),
            model_id: "m".into(),
            chunk_index: 0,
            p_negative: 0.25,
            p_neutral: 0.5,
            p_positive: 0.25,
        }];
        let mut buf = Vec::new();
        write_probabilities(&mut buf, &chunks).unwrap();
        let f = read_probabilities(buf.as_slice()).unwrap();
        assert!(f.is_valid());
        assert_eq!(f.records, chunks);
    }

    #[test]
    fn label_file() {
        let text = "{\"article_id\":\"a\",\"score\":0.2}\n{\"article_id\":\"b\",\"score\":\"-0.40\"}\n{\"article_id\":\"c\",\"score\":1.5}\n{\"article_id\":\"d\",\"score\":\"up, 0.5\"}\n";
        let (labels, errors) = read_labels(text.as_bytes()).unwrap();
        assert_eq!(labels.len(), 2);
        assert_eq!(labels[1].score, -0.4);
        assert_eq!(
            errors.iter().map(|e| e.line).collect::<Vec<_>>(),
            vec![3, 4]
        );
    }

    #[test]
    fn daily_csv_round_trip() {
        let s = DailySentimentSeries {
            model_id: "m".into(),
            topic: "bond market".into(),
            points: vec![DailyPoint {
                date: NaiveDate::from_ymd_opt(2022, 1, 4).unwrap(),
                score: -0.125,
                article_count: 3,
                shock: -1,
            }],
        };
        let mut buf = Vec::new();
        write_daily_csv(&mut buf, std::slice::from_ref(&s)).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "model_id,topic,date,score,article_count,shock\nm,bond market,2022-01-04,-0.125,3,-1\n"
        );
        assert_eq!(read_daily_csv(buf.as_slice()).unwrap(), vec![s]);
    }
}
