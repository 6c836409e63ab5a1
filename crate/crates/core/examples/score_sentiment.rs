//! Chunk probabilities to NDI scores, daily series and shock days.

use bondlab::sentiment::{
    aggregate_chunks, bin_label, daily_series, detect_shocks, ndi, score_articles,
    ChunkAggregation, DEFAULT_BIN_THRESHOLD,
};
use bondlab::synthetic::{
    articles, generate_market, score_planted, MarketConfig, Orientation, ScoringModel,
};

fn main() {
    for (pos, neg) in [(0.6, 0.2), (0.25, 0.25), (0.3, 0.0), (0.0, 0.0)] {
        let s = ndi(pos, neg).unwrap();
        println!(
            "ndi({pos}, {neg}) = {:+.4}{}",
            s.score,
            if s.degenerate { " (degenerate)" } else { "" }
        );
    }

    let market = generate_market(&MarketConfig::default(), 11);
    let planted = articles(&market, 11);
    let chunks = score_planted(
        &planted,
        "bond-signal",
        ScoringModel::Signal {
            orientation: Orientation::Bond,
            noise: 0.2,
        },
        11,
    );
    let first: Vec<_> = chunks
        .iter()
        .take_while(|c| c.article_id == chunks[0].article_id)
        .cloned()
        .collect();
    let one = aggregate_chunks(&first, ChunkAggregation::AverageProbabilities).unwrap();
    println!(
        "{} chunks -> score {:+.3}, {}",
        first.len(),
        one.score,
        bin_label(one.score, DEFAULT_BIN_THRESHOLD).unwrap()
    );

    let corpus: Vec<_> = planted
        .iter()
        .map(|a| bondlab::news::Article {
            article_id: a.article_id.clone(),
            title: a.raw.title.clone(),
            published: a.raw.date[..10].parse().unwrap(),
            topic: a.raw.topic.clone(),
            body: a.raw.text.clone(),
            aligned_date: a.raw.date[..10].parse().unwrap(),
        })
        .collect();
    let outcome = score_articles(&chunks, &corpus, ChunkAggregation::AverageProbabilities);
    let series = detect_shocks(&daily_series(&outcome.records, "bond-signal", ""), 10.0).unwrap();
    let up = series.points.iter().filter(|p| p.shock > 0).count();
    let down = series.points.iter().filter(|p| p.shock < 0).count();
    println!(
        "{} scored days, {up} positive and {down} negative shocks",
        series.points.len()
    );
}
