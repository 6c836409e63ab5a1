//! Trains one LSTM on price and sentiment windows and compares it with the
//! random-walk forecast on the test split.

use bondlab::forecast::{
    build_windows, evaluate, persistence_mse, train, Split, SplitFractions, TrainOptions,
};
use bondlab::hyperopt::HyperParams;
use bondlab::synthetic::{generate_market, signal_series, MarketConfig, Orientation};

fn main() {
    let market = generate_market(&MarketConfig::default(), 21);
    let sentiment = signal_series(&market, "bond-signal", Orientation::Bond, 0.3, 21);
    let bars = &market.bars["BOND01"];
    let dataset =
        build_windows(bars, &sentiment, 8, SplitFractions::default()).expect("enough bars");
    println!(
        "windows: {} train, {} validation, {} test",
        dataset.count(Split::Train),
        dataset.count(Split::Validation),
        dataset.count(Split::Test)
    );

    let hp = HyperParams {
        hidden_size: 12,
        num_layers: 2,
        dropout: 0.1,
        learning_rate: 5e-3,
        weight_decay: 1e-6,
        history_length: 8,
    };
    let run = train(&dataset, &hp, &TrainOptions::default(), 21).expect("training");
    println!(
        "{:?} after {} epochs, best epoch {:?}",
        run.status,
        run.history.len(),
        run.best_epoch
    );

    let mse: f64 = run
        .predictions
        .iter()
        .map(|p| p.error().powi(2))
        .sum::<f64>()
        / run.predictions.len() as f64;
    println!(
        "test MSE {mse:.5} vs persistence {:.5}",
        persistence_mse(&dataset, Split::Test)
    );
    let m = evaluate(&run, &dataset).expect("metrics");
    println!("nRMSE {:?}  IC {:?}", m.nrmse, m.ic);
    for p in run.predictions.iter().take(5) {
        println!(
            "  {} last {:.3} actual {:.3} predicted {:.3}",
            p.date, p.last_price, p.actual_price, p.predicted_price
        );
    }
}
