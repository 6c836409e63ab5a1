use bondlab::forecast::{SplitFractions, TrainOptions};
use bondlab::hyperopt::{search, QuasiRandomSampler, SearchInput, SearchSpace, TpeSampler};
use bondlab::synthetic::{generate_market, signal_series, MarketConfig, Orientation};

fn main() {
    let market = generate_market(&MarketConfig::default(), 8);
    let sentiment = signal_series(&market, "bond-signal", Orientation::Bond, 0.3, 8);
    let input = SearchInput {
        series: market
            .bars
            .values()
            .map(|b| (b.as_slice(), &sentiment))
            .collect(),
        fractions: SplitFractions::default(),
    };
    let space = SearchSpace {
        hidden_size: (4, 16),
        num_layers: (1, 2),
        history_length: (5, 15),
        ..SearchSpace::default()
    };
    let options = TrainOptions {
        max_epochs: 30,
        patience: 5,
        ..TrainOptions::default()
    };
    let tpe = TpeSampler {
        startup_trials: 4,
        ..TpeSampler::default()
    };
    for sampler in [&QuasiRandomSampler as &dyn bondlab::hyperopt::Sampler, &tpe] {
        let (report, run, _) = search(&input, &space, sampler, 8, 8, &options).expect("search");
        println!("{} sampler:\n{}", report.sampler, report.ranked_table());
        println!(
            "pooled test metrics: {:?}\n",
            run.metrics.map(|m| (m.nrmse, m.ic))
        );
    }
}
