//! Every command over the bundled fixtures, written to a scratch directory
//! (or the directory given as the first argument).

use std::path::{Path, PathBuf};

use bondlab::pipeline::{self, Overrides, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/bondlab.toml");
    let scratch = tempfile::tempdir()?;
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| scratch.path().join("out"));
    let mut cfg = PipelineConfig::load(&config)?;
    cfg.apply(&Overrides {
        out_dir: Some(out.clone()),
        ..Overrides::default()
    })?;

    let ingest = pipeline::ingest(&cfg)?;
    println!(
        "ingest: {} trades, {} articles kept",
        ingest.trades, ingest.cleaning.kept
    );
    let scored = pipeline::score_aggregate(&cfg)?;
    println!(
        "score-aggregate: {} records over {} series",
        scored.records, scored.series
    );
    let events = pipeline::events(&cfg)?;
    println!(
        "events: {} cells ({} absent), figures {:?}",
        events.cells, events.absent_cells, events.figures
    );
    let forecast = pipeline::forecast(&cfg)?;
    for s in &forecast.summary {
        println!(
            "forecast: {} mean nRMSE {:?} mean IC {:?}",
            s.model, s.mean_nrmse, s.mean_ic
        );
    }
    for r in &forecast.dm {
        println!(
            "dm: {} vs {} p = {:.4}",
            r.instrument_id, r.baseline_model, r.p_value
        );
    }
    let report = pipeline::report(&cfg)?;
    println!(
        "report: {} lines in {}",
        report.lines().count(),
        out.join(pipeline::REPORT).display()
    );
    Ok(())
}
