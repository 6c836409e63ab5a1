//! Trade prints to daily VWAP bars, then the liquidity filter.

use bondlab::market_data::{daily_aggregate, ingest_trades_from, liquidity_filter};
use bondlab::synthetic::{generate_market, write_trades_csv, MarketConfig};

fn main() {
    let market = generate_market(
        &MarketConfig {
            instruments: 4,
            days: 30,
            ..MarketConfig::default()
        },
        3,
    );
    let mut csv = Vec::new();
    write_trades_csv(&mut csv, &market, 3).expect("in-memory write");
    csv.extend_from_slice(b"BOND01,2021-01-04T10:00:00Z,-5,1000\n");

    let ingest = ingest_trades_from(csv.as_slice(), &market.calendar).expect("ingest");
    println!(
        "{} trades, {} malformed",
        ingest.records.len(),
        ingest.malformed.len()
    );
    for m in &ingest.malformed {
        println!("  line {}: {}", m.line, m.reason);
    }

    let bars = daily_aggregate(&ingest.records);
    for (id, series) in &bars {
        let last = series.last().unwrap();
        println!(
            "{id}: {} bars, last {} at {:.4}",
            series.len(),
            last.date,
            last.price
        );
    }
    println!("two most liquid: {:?}", liquidity_filter(&bars, 3, 2));
}
