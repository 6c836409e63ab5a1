use std::path::PathBuf;
use std::process::ExitCode;

use bondlab::pipeline::{self, Overrides, PipelineConfig, PipelineError};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "bondlab",
    version,
    about = "Bond news sentiment, event studies and LSTM forecasts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[arg(long, global = true, default_value = "bondlab.toml")]
    config: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long = "model", global = true)]
    models: Vec<String>,
    #[arg(long = "topic", global = true)]
    topics: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Trades to daily bars, raw articles to the cleaned corpus.
    Ingest,
    /// Probability files to daily sentiment series and shocks.
    ScoreAggregate,
    /// Rolling correlations, directional accuracy and figures.
    Events,
    /// Hyperparameter search, training and the DM matrix.
    Forecast,
    /// DM matrix from existing forecast runs.
    Dm,
    /// Markdown digest of every artifact in the output directory.
    Report,
}

fn run(cli: Cli) -> Result<String, PipelineError> {
    let mut cfg = PipelineConfig::load(&cli.config)?;
    cfg.apply(&Overrides {
        seed: cli.seed,
        workers: cli.workers,
        out_dir: cli.out,
        models: cli.models,
        topics: cli.topics,
    })?;
    Ok(match cli.command {
        Command::Ingest => json(&pipeline::ingest(&cfg)?),
        Command::ScoreAggregate => json(&pipeline::score_aggregate(&cfg)?),
        Command::Events => json(&pipeline::events(&cfg)?),
        Command::Forecast => {
            let outcome = pipeline::forecast(&cfg)?;
            json(&outcome.summary)
        }
        Command::Dm => json(&pipeline::dm(&cfg)?),
        Command::Report => {
            pipeline::report(&cfg)?;
            cfg.out_dir.join(pipeline::REPORT).display().to_string()
        }
    })
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).unwrap_or_default()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BONDLAB_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
