//! Regenerates the bundled fixture directory.
//!
//! ```text
//! cargo run --example generate_fixtures -- [DIR] [SEED]
//! ```

use std::path::PathBuf;

use bondlab::synthetic::{write_fixture_set, MarketConfig, PERMUTED_MODEL, SIGNAL_MODEL};

const CONFIG: &str = r#"seed = 42
workers = 1
out_dir = "out"
models = ["{signal}", "{permuted}"]

[paths]
trades = "trades.csv"
calendar = "calendar.txt"
articles = "articles.jsonl"
probabilities = ["probabilities_{signal}.jsonl", "probabilities_{permuted}.jsonl"]

[corpus]
validation_start = "2021-08-02"
test_start = "2021-10-01"
evaluation_start = "2021-11-15"

[events]
window_days = 7

[forecast]
budget = 4
max_epochs = 40
patience = 6
batch_size = 32

[forecast.space]
hidden_size = [4, 16]
num_layers = [1, 2]
dropout = [0.0, 0.2]
learning_rate = [0.002, 0.02]
weight_decay = [1e-8, 1e-4]
history_length = [5, 10]
"#;

fn main() -> std::io::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures"));
    let seed: u64 = args
        .next()
        .map(|s| s.parse().expect("seed must be an integer"))
        .unwrap_or(7);
    let set = write_fixture_set(&dir, &MarketConfig::default(), seed, 0.3)?;
    let config = CONFIG
        .replace("{signal}", SIGNAL_MODEL)
        .replace("{permuted}", PERMUTED_MODEL);
    std::fs::write(dir.join("bondlab.toml"), config)?;
    println!(
        "{} instruments, {} trading days, {} probability files in {}",
        set.market.bars.len(),
        set.market.dates.len(),
        set.probabilities.len(),
        dir.display()
    );
    Ok(())
}
