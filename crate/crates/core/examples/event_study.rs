//! Rolling correlation and shock-day directional accuracy on a market whose
//! prices fall after optimistic news.

use bondlab::events::{align, directional_accuracy, rolling_correlation, DEFAULT_WINDOW_DAYS};
use bondlab::market_data::pooled_series;
use bondlab::sentiment::detect_shocks;
use bondlab::synthetic::{
    generate_market, permuted_series, signal_series, MarketConfig, Orientation,
};

fn main() {
    let market = generate_market(&MarketConfig::default(), 5);
    let pooled = pooled_series(&market.bars);
    let bond = signal_series(&market, "bond", Orientation::Bond, 0.3, 5);
    let equity = signal_series(&market, "equity", Orientation::Equity, 0.3, 5);
    let shuffled = permuted_series(&bond, "shuffled", 5);

    println!("model     r(7d)   n    accuracy  events  p");
    for series in [&bond, &equity, &shuffled] {
        let shocks = detect_shocks(series, 10.0).unwrap();
        let pairs = align(&shocks, &pooled, &market.calendar).unwrap();
        let cell = rolling_correlation(&pairs, DEFAULT_WINDOW_DAYS, false).unwrap();
        let acc = directional_accuracy(&pairs, true).unwrap();
        println!(
            "{:<9} {:>6} {:>4}  {:>8.3}  {:>6}  {:.2e}",
            series.model_id,
            cell.r.map_or("n/a".into(), |r| format!("{r:+.3}")),
            cell.n,
            acc.accuracy,
            acc.n_events,
            acc.p_value
        );
    }
}
