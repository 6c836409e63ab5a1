//! Trading-day calendar.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CalendarError {
    #[error("cannot read calendar {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("calendar line {line}: invalid date {text:?}")]
    BadDate { line: usize, text: String },
    #[error("calendar is empty")]
    Empty,
}

/// Ordered set of trading dates.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TradingCalendar {
    days: BTreeSet<NaiveDate>,
}

impl TradingCalendar {
    pub fn new(days: impl IntoIterator<Item = NaiveDate>) -> Self {
        Self {
            days: days.into_iter().collect(),
        }
    }

    /// Monday-to-Friday calendar over `[start, end]`.
    pub fn weekdays(start: NaiveDate, end: NaiveDate) -> Self {
        Self::new(
            start
                .iter_days()
                .take_while(|d| *d <= end)
                .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)),
        )
    }

    /// Parses one ISO date per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, CalendarError> {
        let mut days = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let d = NaiveDate::parse_from_str(line, "%Y-%m-%d").map_err(|_| {
                CalendarError::BadDate {
                    line: i + 1,
                    text: line.to_string(),
                }
            })?;
            days.insert(d);
        }
        if days.is_empty() {
            return Err(CalendarError::Empty);
        }
        Ok(Self { days })
    }

    pub fn load(path: &Path) -> Result<Self, CalendarError> {
        let text = fs::read_to_string(path).map_err(|source| CalendarError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.days.len() * 11);
        for d in &self.days {
            s.push_str(&d.format("%Y-%m-%d").to_string());
            s.push('\n');
        }
        s
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.days.contains(&date)
    }

    /// First trading day on or after `date`.
    pub fn on_or_after(&self, date: NaiveDate) -> Option<NaiveDate> {
        self.days.range(date..).next().copied()
    }

    /// First trading day strictly after `date`.
    pub fn next_after(&self, date: NaiveDate) -> Option<NaiveDate> {
        self.days
            .range((std::ops::Bound::Excluded(date), std::ops::Bound::Unbounded))
            .next()
            .copied()
    }

    pub fn first(&self) -> Option<NaiveDate> {
        self.days.first().copied()
    }

    pub fn last(&self) -> Option<NaiveDate> {
        self.days.last().copied()
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.days.iter().copied()
    }
}
