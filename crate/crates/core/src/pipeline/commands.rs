use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;

use serde::Serialize;

use super::config::PipelineConfig;
use super::{
    prepare_out, require_input, require_upstream, svg, write_file, PipelineError, ACCURACY,
    ACCURACY_SVG, ALL_TOPICS, BARS, CLEANING_REPORT, CORPUS, CORPUS_SPLIT, DAILY, DM_MATRIX,
    FORECAST_FAILURES, FORECAST_SUMMARY, GRID, MALFORMED_ROWS, PROBABILITY_ERRORS, RECORDS, REPORT,
    SCORING_REPORT,
};
use crate::calendar::{CalendarError, TradingCalendar};
use crate::events::{self, AccuracyRow, CorrelationCell, CorrelationGrid, GridCell};
use crate::market_data::{self, BarsByInstrument, MarketDataError, POOLED_ID};
use crate::news::{self, chronological_split, clean_corpus, CleaningReport, SplitBoundaries};
use crate::sentiment::io as sio;
use crate::sentiment::{self, DailySentimentSeries};

pub(crate) fn load_calendar(path: &Path) -> Result<TradingCalendar, PipelineError> {
    require_input(path)?;
    TradingCalendar::load(path).map_err(|e| match e {
        CalendarError::Io { .. } => PipelineError::MissingInput(path.to_path_buf()),
        other => PipelineError::DataQuality {
            message: other.to_string(),
            report: path.to_path_buf(),
        },
    })
}

pub(crate) fn load_bars(cfg: &PipelineConfig) -> Result<BarsByInstrument, PipelineError> {
    let path = require_upstream(&cfg.out_dir, BARS, "ingest")?;
    market_data::load_bars(&path).map_err(|e| PipelineError::DataQuality {
        message: e.to_string(),
        report: path.clone(),
    })
}

pub(crate) fn load_daily(cfg: &PipelineConfig) -> Result<Vec<DailySentimentSeries>, PipelineError> {
    let path = require_upstream(&cfg.out_dir, DAILY, "score-aggregate")?;
    let file =
        File::open(&path).map_err(|e| PipelineError::internal(path.display().to_string(), e))?;
    sio::read_daily_csv(file).map_err(|e| PipelineError::DataQuality {
        message: e.to_string(),
        report: path.clone(),
    })
}

/// Configured models, or every model present in `available` (sorted).
pub(crate) fn select_models(
    cfg: &PipelineConfig,
    available: &BTreeSet<String>,
) -> Result<Vec<String>, PipelineError> {
    if cfg.models.is_empty() {
        return Ok(available.iter().cloned().collect());
    }
    for m in &cfg.models {
        if !available.contains(m) {
            return Err(PipelineError::MissingUpstream(format!(
                "sentiment for model {m}"
            )));
        }
    }
    Ok(cfg.models.clone())
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestSummary {
    pub trades: usize,
    pub malformed_trades: usize,
    pub instruments: usize,
    pub bar_days: usize,
    pub cleaning: CleaningReport,
}

/// Trades to daily bars and raw articles to the cleaned corpus.
pub fn ingest(cfg: &PipelineConfig) -> Result<IngestSummary, PipelineError> {
    let calendar = load_calendar(&cfg.paths.calendar)?;
    require_input(&cfg.paths.trades)?;
    require_input(&cfg.paths.articles)?;
    prepare_out(cfg)?;
    let out = &cfg.out_dir;

    let trades = match market_data::ingest_trades(&cfg.paths.trades, &calendar) {
        Ok(t) => t,
        Err(MarketDataError::TooManyMalformed {
            malformed,
            total,
            rows,
        }) => {
            let report = out.join(MALFORMED_ROWS);
            let mut text = String::from("line,reason\n");
            for r in &rows {
                let _ = writeln!(text, "{},\"{}\"", r.line, r.reason.replace('"', "'"));
            }
            write_file(&report, text)?;
            return Err(PipelineError::DataQuality {
                message: format!("{malformed} of {total} trade rows malformed (limit 10%)"),
                report,
            });
        }
        Err(MarketDataError::Io { .. }) => {
            return Err(PipelineError::MissingInput(cfg.paths.trades.clone()))
        }
        Err(e) => {
            return Err(PipelineError::DataQuality {
                message: e.to_string(),
                report: cfg.paths.trades.clone(),
            })
        }
    };
    let bars = market_data::daily_aggregate(&trades.records);
    let mut buf = Vec::new();
    market_data::write_bars(&mut buf, &bars).map_err(|e| PipelineError::internal(BARS, e))?;
    write_file(&out.join(BARS), buf)?;
    if !trades.malformed.is_empty() {
        let mut text = String::from("line,reason\n");
        for r in &trades.malformed {
            let _ = writeln!(text, "{},\"{}\"", r.line, r.reason.replace('"', "'"));
        }
        write_file(&out.join(MALFORMED_ROWS), text)?;
    }

    let file = File::open(&cfg.paths.articles)
        .map_err(|_| PipelineError::MissingInput(cfg.paths.articles.clone()))?;
    let raw =
        news::read_raw_jsonl(BufReader::new(file)).map_err(|e| PipelineError::DataQuality {
            message: e.to_string(),
            report: cfg.paths.articles.clone(),
        })?;
    let blocklist: HashSet<String> = cfg.corpus.topic_blocklist.iter().cloned().collect();
    let (articles, cleaning) = clean_corpus(raw, &blocklist, &calendar);
    let mut buf = Vec::new();
    news::write_corpus_jsonl(&mut buf, &articles)
        .map_err(|e| PipelineError::internal(CORPUS, e))?;
    write_file(&out.join(CORPUS), buf)?;
    write_file(&out.join(CLEANING_REPORT), cleaning.to_csv())?;

    let c = &cfg.corpus;
    if let (Some(v), Some(t), Some(e)) = (c.validation_start, c.test_start, c.evaluation_start) {
        let bounds =
            SplitBoundaries::new(v, t, e).map_err(|e| PipelineError::Config(e.to_string()))?;
        let split = chronological_split(&articles, bounds);
        let mut text = String::from("article_id,aligned_date,partition\n");
        for a in &articles {
            let part = bounds.partition_of(a.aligned_date);
            let _ = writeln!(
                text,
                "{},{},{}",
                a.article_id,
                a.aligned_date,
                format!("{part:?}").to_lowercase()
            );
        }
        debug_assert_eq!(split.total(), articles.len());
        write_file(&out.join(CORPUS_SPLIT), text)?;
    }
    log::info!(
        "ingest: {} trades ({} malformed) -> {} instruments; {} of {} articles kept",
        trades.records.len(),
        trades.malformed.len(),
        bars.len(),
        cleaning.kept,
        cleaning.input
    );
    Ok(IngestSummary {
        trades: trades.records.len(),
        malformed_trades: trades.malformed.len(),
        instruments: bars.len(),
        bar_days: bars.values().map(Vec::len).sum(),
        cleaning,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ScoreSummary {
    pub models: Vec<String>,
    pub topics: Vec<String>,
    pub records: usize,
    pub series: usize,
}

/// Probability files to article scores, daily series and shock flags.
pub fn score_aggregate(cfg: &PipelineConfig) -> Result<ScoreSummary, PipelineError> {
    let corpus_path = require_upstream(&cfg.out_dir, CORPUS, "ingest")?;
    if cfg.paths.probabilities.is_empty() {
        return Err(PipelineError::Config(
            "no probability files configured".into(),
        ));
    }
    for p in &cfg.paths.probabilities {
        require_input(p)?;
    }
    prepare_out(cfg)?;
    let out = &cfg.out_dir;
    let file = File::open(&corpus_path).map_err(|e| PipelineError::internal(CORPUS, e))?;
    let corpus =
        news::read_corpus_jsonl(BufReader::new(file)).map_err(|e| PipelineError::DataQuality {
            message: e.to_string(),
            report: corpus_path.clone(),
        })?;

    let mut chunks = Vec::new();
    let mut errors = String::new();
    for p in &cfg.paths.probabilities {
        let file = File::open(p).map_err(|_| PipelineError::MissingInput(p.clone()))?;
        let parsed = sio::read_probabilities(BufReader::new(file)).map_err(|e| {
            PipelineError::DataQuality {
                message: e.to_string(),
                report: p.clone(),
            }
        })?;
        for e in &parsed.errors {
            let _ = writeln!(
                errors,
                "{},{},\"{}\"",
                p.display(),
                e.line,
                e.message.replace('"', "'")
            );
        }
        chunks.extend(parsed.records);
    }
    if !errors.is_empty() {
        let report = out.join(PROBABILITY_ERRORS);
        write_file(&report, format!("file,line,message\n{errors}"))?;
        return Err(PipelineError::DataQuality {
            message: "probability files failed validation".into(),
            report,
        });
    }
    let available: BTreeSet<String> = chunks.iter().map(|c| c.model_id.clone()).collect();
    let models = select_models(cfg, &available)?;
    chunks.retain(|c| models.contains(&c.model_id));
    let outcome = sentiment::score_articles(&chunks, &corpus, cfg.sentiment.aggregation);
    let mut buf = Vec::new();
    sio::write_records_csv(&mut buf, &outcome.records)
        .map_err(|e| PipelineError::internal(RECORDS, e))?;
    write_file(&out.join(RECORDS), buf)?;

    let topics: Vec<String> = if cfg.topics.is_empty() {
        corpus
            .iter()
            .map(|a| a.topic.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    } else {
        cfg.topics.clone()
    };
    let mut series = Vec::new();
    for m in &models {
        let mut all = sentiment::daily_series(&outcome.records, m, "");
        all.topic = ALL_TOPICS.into();
        series.push(all);
        for t in &topics {
            series.push(sentiment::daily_series(&outcome.records, m, t));
        }
    }
    let pct = cfg.sentiment.percentile;
    let pooled = if cfg.sentiment.pooled_thresholds {
        Some(sentiment::pooled_thresholds(&series, pct).map_err(|e| {
            PipelineError::DataQuality {
                message: e.to_string(),
                report: out.join(RECORDS),
            }
        })?)
    } else {
        None
    };
    let series: Vec<DailySentimentSeries> = series
        .into_iter()
        .map(|s| match pooled {
            Some(th) => sentiment::apply_thresholds(&s, th),
            None => sentiment::detect_shocks(&s, pct).unwrap_or_else(|e| {
                log::warn!("no shocks for {}/{}: {e}", s.model_id, s.topic);
                s
            }),
        })
        .collect();
    let mut buf = Vec::new();
    sio::write_daily_csv(&mut buf, &series).map_err(|e| PipelineError::internal(DAILY, e))?;
    write_file(&out.join(DAILY), buf)?;

    let mut report = String::from("model_id,articles_scored,rejected,degenerate\n");
    for m in &models {
        let scored = outcome.records.iter().filter(|r| &r.model_id == m).count();
        let rejected = outcome.rejected.iter().filter(|r| &r.0 == m).count();
        let _ = writeln!(report, "{m},{scored},{rejected},{}", outcome.degenerate);
    }
    let _ = writeln!(report, "unknown_articles,{},,", outcome.unknown_articles);
    write_file(&out.join(SCORING_REPORT), report)?;
    log::info!(
        "score-aggregate: {} records, {} series",
        outcome.records.len(),
        series.len()
    );
    Ok(ScoreSummary {
        models,
        topics,
        records: outcome.records.len(),
        series: series.len(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EventsSummary {
    pub cells: usize,
    pub absent_cells: usize,
    pub accuracy_rows: usize,
    pub figures: Vec<String>,
}

/// Rolling correlation grid, directional accuracy table and figures.
pub fn events(cfg: &PipelineConfig) -> Result<EventsSummary, PipelineError> {
    let bars = load_bars(cfg)?;
    let daily = load_daily(cfg)?;
    let calendar = load_calendar(&cfg.paths.calendar)?;
    prepare_out(cfg)?;
    let out = &cfg.out_dir;
    let available: BTreeSet<String> = daily.iter().map(|s| s.model_id.clone()).collect();
    let models = select_models(cfg, &available)?;
    let topics: Vec<String> = if cfg.topics.is_empty() {
        let mut seen = Vec::new();
        for s in &daily {
            if s.topic != ALL_TOPICS && !seen.contains(&s.topic) {
                seen.push(s.topic.clone());
            }
        }
        seen
    } else {
        cfg.topics.clone()
    };

    let pooled = market_data::pooled_series(&bars);
    let mut columns: Vec<(String, &[market_data::DailyBar])> =
        vec![(POOLED_ID.to_string(), &pooled)];
    if cfg.events.per_instrument {
        for (id, b) in &bars {
            columns.push((id.clone(), b));
        }
    }
    let find = |m: &str, t: &str| daily.iter().find(|s| s.model_id == m && s.topic == t);

    let mut cells = Vec::new();
    let mut accuracy = Vec::new();
    for m in &models {
        for t in &topics {
            let series = find(m, t);
            for (col, col_bars) in &columns {
                let cell = match series {
                    None => CorrelationCell::absent(events::AbsentReason::NoOverlap, 0),
                    Some(s) => match events::align(s, col_bars, &calendar) {
                        Ok(pairs) => events::rolling_correlation(
                            &pairs,
                            cfg.events.window_days,
                            cfg.events.shocks_only,
                        )
                        .map_err(|e| PipelineError::Config(e.to_string()))?,
                        Err(_) => CorrelationCell::absent(events::AbsentReason::NoOverlap, 0),
                    },
                };
                cells.push(GridCell {
                    topic: t.clone(),
                    instrument: col.clone(),
                    model: m.clone(),
                    cell,
                });
            }
            let result = series
                .and_then(|s| events::align(s, &pooled, &calendar).ok())
                .and_then(|pairs| events::directional_accuracy(&pairs, true).ok());
            accuracy.push(AccuracyRow {
                topic: t.clone(),
                model: m.clone(),
                result,
            });
        }
    }

    let mut buf = Vec::new();
    events::write_grid_csv(&mut buf, &cells).map_err(|e| PipelineError::internal(GRID, e))?;
    write_file(&out.join(GRID), buf)?;
    let mut buf = Vec::new();
    events::write_accuracy_csv(&mut buf, &accuracy)
        .map_err(|e| PipelineError::internal(ACCURACY, e))?;
    write_file(&out.join(ACCURACY), buf)?;

    let mut figures = Vec::new();
    for m in &models {
        let grid = CorrelationGrid::from_cells(m, &cells);
        let name = format!("heatmap_{}.svg", super::path_component(m));
        let title = format!("{m}: {}-day rolling correlation", cfg.events.window_days);
        write_file(&out.join(&name), svg::correlation_heatmap(&grid, &title))?;
        figures.push(name);
    }
    write_file(
        &out.join(ACCURACY_SVG),
        svg::accuracy_bars(&accuracy, "Next-day directional accuracy on shock days"),
    )?;
    figures.push(ACCURACY_SVG.into());
    let absent = cells.iter().filter(|c| c.cell.r.is_none()).count();
    log::info!(
        "events: {} cells ({} absent), {} accuracy rows",
        cells.len(),
        absent,
        accuracy.len()
    );
    Ok(EventsSummary {
        cells: cells.len(),
        absent_cells: absent,
        accuracy_rows: accuracy.len(),
        figures,
    })
}

fn csv_as_markdown(text: &str) -> String {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut md = String::new();
    for (i, rec) in rdr.records().flatten().enumerate() {
        let cells: Vec<&str> = rec.iter().collect();
        let _ = writeln!(md, "| {} |", cells.join(" | "));
        if i == 0 {
            let _ = writeln!(md, "|{}", "---|".repeat(cells.len()));
        }
    }
    md
}

/// Markdown digest of whatever artifacts exist in the output directory.
pub fn report(cfg: &PipelineConfig) -> Result<String, PipelineError> {
    let out = &cfg.out_dir;
    let sections: [(&str, &str); 7] = [
        ("Corpus cleaning", CLEANING_REPORT),
        ("Sentiment scoring", SCORING_REPORT),
        ("Rolling correlations", GRID),
        ("Directional accuracy on shock days", ACCURACY),
        ("Forecast summary (mean over instruments)", FORECAST_SUMMARY),
        (
            "Diebold-Mariano tests against the reference model",
            DM_MATRIX,
        ),
        ("Forecast failures", FORECAST_FAILURES),
    ];
    let mut md = String::from("# bondlab report\n\n");
    let _ = writeln!(md, "Seed: {}\n", cfg.seed);
    let mut found = 0;
    for (title, file) in sections {
        let Ok(text) = fs::read_to_string(out.join(file)) else {
            continue;
        };
        found += 1;
        let _ = writeln!(md, "## {title}\n");
        if file == DM_MATRIX {
            let fc = &cfg.forecast;
            let reference = fc
                .reference_model
                .clone()
                .or_else(|| cfg.models.first().cloned())
                .unwrap_or_else(|| "first model".into());
            let lag = match fc.lag()? {
                crate::stats::LagChoice::Automatic => "floor(4 (n/100)^(2/9))".to_string(),
                crate::stats::LagChoice::Fixed(l) => l.to_string(),
            };
            let _ = writeln!(
                md,
                "Squared-error loss, reference {reference}, Newey-West lag {lag}, Harvey correction {}.\n",
                if fc.harvey { "on" } else { "off" }
            );
        }
        if text.lines().count() <= 1 {
            let note = if file == DM_MATRIX {
                "No comparisons: fewer than two models were forecast."
            } else {
                "No rows."
            };
            let _ = writeln!(md, "{note}\n");
        } else {
            md.push_str(&csv_as_markdown(&text));
            md.push('\n');
        }
    }
    if found == 0 {
        return Err(PipelineError::MissingUpstream(format!(
            "no pipeline outputs in {}",
            out.display()
        )));
    }
    let mut figures: Vec<String> = fs::read_dir(out)
        .map_err(|e| PipelineError::internal(out.display().to_string(), e))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".svg"))
        .collect();
    figures.sort();
    if !figures.is_empty() {
        md.push_str("## Figures\n\n");
        for f in figures {
            let _ = writeln!(md, "![{f}]({f})");
        }
        md.push('\n');
    }
    let search: BTreeMap<String, String> = super::forecasting::search_tables(out);
    if !search.is_empty() {
        md.push_str("## Hyperparameter searches\n\n");
        for (run, table) in search {
            let _ = writeln!(md, "### {run}\n\n```\n{table}```\n");
        }
    }
    write_file(&out.join(REPORT), &md)?;
    Ok(md)
}
