//! One line per acceptance criterion, then a nonzero exit if any failed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use bondlab::events::{align, directional_accuracy};
use bondlab::forecast::lstm::{backward, forward, LstmParams, LstmShape};
use bondlab::forecast::{build_windows, leakage_check, SplitFractions, TrainOptions};
use bondlab::hyperopt::{search, QuasiRandomSampler, SearchInput, SearchSpace};
use bondlab::market_data::{pooled_series, DailyBar};
use bondlab::pipeline::{self, Overrides, PipelineConfig};
use bondlab::sentiment::{detect_shocks, ndi, DailyPoint, DailySentimentSeries};
use bondlab::stats::{dm_test, newey_west_variance, pearson, DmOptions, LagChoice};
use bondlab::synthetic::{
    generate_market, permuted_series, signal_series, MarketConfig, Orientation,
};

struct Outcome {
    passed: bool,
    detail: String,
}

fn check(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn within(limit: Duration, started: Instant, mut o: Outcome) -> Outcome {
    let took = started.elapsed();
    if took > limit {
        o.passed = false;
    }
    o.detail = format!(
        "{}; {:.2}s (limit {}s)",
        o.detail,
        took.as_secs_f64(),
        limit.as_secs()
    );
    o
}

fn ndi_exactness() -> Outcome {
    let t = Instant::now();
    let mut failures = Vec::new();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    if !close(ndi(0.6, 0.2).unwrap().score, 0.5) {
        failures.push("(0.6, 0.2)".to_string());
    }
    for p in [1e-9, 0.1, 0.33, 0.5] {
        if ndi(p, p).unwrap().score != 0.0 {
            failures.push(format!("({p}, {p})"));
        }
    }
    if !close(ndi(0.3, 0.0).unwrap().score, 1.0) {
        failures.push("(0.3, 0.0)".to_string());
    }
    let zero = ndi(0.0, 0.0).unwrap();
    if zero.score != 0.0 || !zero.degenerate {
        failures.push("(0, 0) not flagged".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        let pos: f64 = rng.gen_range(0.0..1.0);
        let neg: f64 = rng.gen_range(0.0..=(1.0 - pos));
        let s = ndi(pos, neg).unwrap().score;
        if !(-1.0..=1.0).contains(&s) {
            failures.push(format!("({pos}, {neg}) -> {s}"));
        }
        if !close(s, -ndi(neg, pos).unwrap().score) {
            failures.push(format!("antisymmetry at ({pos}, {neg})"));
        }
        let k: f64 = rng.gen_range(0.01..1.0);
        if !close(s, ndi(k * pos, k * neg).unwrap().score) {
            failures.push(format!("scale at ({pos}, {neg}, {k})"));
        }
    }
    within(
        Duration::from_secs(1),
        t,
        check(
            failures.is_empty(),
            format!(
                "10000 random pairs, {} failures{}",
                failures.len(),
                failures
                    .first()
                    .map(|f| format!(", first {f:?}"))
                    .unwrap_or_default()
            ),
        ),
    )
}

/// Linear interpolation between closest ranks, written out independently.
fn oracle_percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let below = pos.floor();
    let i = below as usize;
    if i + 1 >= v.len() {
        return v[v.len() - 1];
    }
    v[i] + (pos - below) * (v[i + 1] - v[i])
}

fn series_from(scores: &[f64]) -> DailySentimentSeries {
    let d0 = NaiveDate::from_ymd_opt(2022, 1, 3).unwrap();
    DailySentimentSeries {
        model_id: "m".into(),
        topic: "t".into(),
        points: scores
            .iter()
            .enumerate()
            .map(|(i, s)| DailyPoint {
                date: d0 + chrono::Duration::days(i as i64),
                score: *s,
                article_count: 1,
                shock: 0,
            })
            .collect(),
    }
}

fn shock_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatched = 0;
    let mut flagged = 0;
    for k in 0..500 {
        let n = rng.gen_range(10..=200);
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                let s: f64 = rng.gen_range(-1.0..1.0);
                if k % 3 == 0 {
                    (s * 10.0).round() / 10.0
                } else {
                    s
                }
            })
            .collect();
        let lower = oracle_percentile(&scores, 10.0);
        let upper = oracle_percentile(&scores, 90.0);
        let expected: Vec<i8> = scores
            .iter()
            .map(|&s| {
                if upper <= lower {
                    0
                } else if s >= upper {
                    1
                } else if s <= lower {
                    -1
                } else {
                    0
                }
            })
            .collect();
        let got: Vec<i8> = detect_shocks(&series_from(&scores), 10.0)
            .unwrap()
            .points
            .iter()
            .map(|p| p.shock)
            .collect();
        flagged += got.iter().filter(|s| **s != 0).count();
        if got != expected {
            mismatched += 1;
        }
    }
    within(
        Duration::from_secs(10),
        t,
        check(
            mismatched == 0,
            format!("500 series, {mismatched} mismatched, {flagged} shocks flagged"),
        ),
    )
}

fn direct_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..x.len() {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx).powi(2);
        syy += (y[i] - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

fn direct_newey_west(d: &[f64], lag: usize) -> f64 {
    let n = d.len();
    let m = d.iter().sum::<f64>() / n as f64;
    let gamma = |j: usize| (j..n).map(|t| (d[t] - m) * (d[t - j] - m)).sum::<f64>() / n as f64;
    let mut v = gamma(0);
    for j in 1..=lag {
        v += 2.0 * (1.0 - j as f64 / (lag as f64 + 1.0)) * gamma(j);
    }
    v
}

fn pearson_newey_west_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_r: f64 = 0.0;
    let mut worst_nw: f64 = 0.0;
    let mut lag0_exact = true;
    for _ in 0..200 {
        let n = rng.gen_range(5..300);
        let x: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * 3.0 + 1.0)
            .collect();
        let b: f64 = rng.gen_range(-2.0..2.0);
        let y: Vec<f64> = x
            .iter()
            .map(|v| b * v + rng.sample::<f64, _>(StandardNormal))
            .collect();
        worst_r = worst_r.max((pearson(&x, &y).unwrap() - direct_pearson(&x, &y)).abs());
        let m = x.iter().sum::<f64>() / n as f64;
        let var: f64 = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
        if newey_west_variance(&x, 0).unwrap().value != var {
            lag0_exact = false;
        }
        for lag in 1..5.min(n) {
            let a = newey_west_variance(&x, lag).unwrap().value;
            let o = direct_newey_west(&x, lag);
            worst_nw = worst_nw.max((a - o).abs() / o.abs().max(1.0));
        }
    }
    check(
        worst_r <= 1e-10 && worst_nw <= 1e-10 && lag0_exact,
        format!("200 series, max |dr| {worst_r:.1e}, max NW rel err {worst_nw:.1e}, lag-0 exact {lag0_exact}"),
    )
}

fn dm_sanity() -> Outcome {
    let opts = DmOptions {
        lag: LagChoice::Automatic,
        harvey: false,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut antisymmetric = true;
    for _ in 0..50 {
        let a: Vec<f64> = (0..120).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..120)
            .map(|_| 1.1 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        if dm_test(&a, &b, opts).unwrap().dm_stat != -dm_test(&b, &a, opts).unwrap().dm_stat {
            antisymmetric = false;
        }
    }
    let same = dm_test(&[0.3; 40], &[0.3; 40], opts).unwrap();
    let degenerate = same.p_value == 1.0 && same.degenerate;
    let mut rejected_gap = 0;
    let mut rejected_null = 0;
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let n = 500;
        let a: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..n)
            .map(|_| 1.25 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let c: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        if dm_test(&a, &b, opts).unwrap().significant(0.05) {
            rejected_gap += 1;
        }
        if dm_test(&a, &c, opts).unwrap().significant(0.05) {
            rejected_null += 1;
        }
    }
    check(
        antisymmetric && degenerate && rejected_gap >= 45 && rejected_null <= 5,
        format!(
            "antisymmetric {antisymmetric}, degenerate p=1 flagged {degenerate}, power {rejected_gap}/50, size {rejected_null}/50"
        ),
    )
}

fn gradient_check() -> Outcome {
    let t = Instant::now();
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for seed in 0..20u64 {
        for hidden in [4, 8] {
            for layers in [1, 2] {
                let shape = LstmShape {
                    input_size: 3,
                    hidden_size: hidden,
                    num_layers: layers,
                };
                let dropout = if layers > 1 { 0.2 } else { 0.0 };
                let params = LstmParams::init(shape, dropout, seed);
                let mut rng = ChaCha8Rng::seed_from_u64(seed + 500);
                let window: Vec<f64> = (0..6 * 3).map(|_| rng.gen_range(-1.5..1.5)).collect();
                let target: f64 = rng.gen_range(-1.0..1.0);
                let mask_seed = seed * 31 + 7;
                let loss_at = |flat: &[f64]| {
                    let p = LstmParams::from_flat(shape, dropout, flat).unwrap();
                    let y = forward(&p, &window, true, mask_seed).unwrap().prediction;
                    (y - target) * (y - target)
                };
                let cache = forward(&params, &window, true, mask_seed).unwrap();
                let analytic = backward(&params, &cache, target).unwrap().1.to_flat();
                let base = params.to_flat();
                for i in 0..base.len() {
                    let mut plus = base.clone();
                    plus[i] += eps;
                    let mut minus = base.clone();
                    minus[i] -= eps;
                    let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * eps);
                    let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
                    worst = worst.max((analytic[i] - numeric).abs() / denom);
                }
                cases += 1;
            }
        }
    }
    within(
        Duration::from_secs(60),
        t,
        check(
            worst < 1e-4,
            format!("{cases} cases, max relative error {worst:.2e}"),
        ),
    )
}

fn collect_files(dir: &Path, root: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
    for entry in fs::read_dir(dir).unwrap().flatten() {
        let p = entry.path();
        if p.is_dir() {
            collect_files(&p, root, out);
        } else {
            out.insert(
                p.strip_prefix(root).unwrap().to_path_buf(),
                fs::read(&p).unwrap(),
            );
        }
    }
}

fn forecast_determinism() -> Outcome {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/bondlab.toml");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let mut cfg = PipelineConfig::load(&fixtures).unwrap();
    cfg.apply(&Overrides {
        out_dir: Some(out.clone()),
        ..Overrides::default()
    })
    .unwrap();
    let mut outputs = Vec::new();
    for _ in 0..2 {
        if out.exists() {
            fs::remove_dir_all(&out).unwrap();
        }
        pipeline::ingest(&cfg).unwrap();
        pipeline::score_aggregate(&cfg).unwrap();
        pipeline::forecast(&cfg).unwrap();
        let mut files = BTreeMap::new();
        collect_files(&out, &out, &mut files);
        outputs.push(files);
    }
    let csvs = outputs[0]
        .keys()
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .count();
    let differing: Vec<&PathBuf> = outputs[0]
        .iter()
        .filter(|(p, bytes)| outputs[1].get(*p) != Some(*bytes))
        .map(|(p, _)| p)
        .collect();
    check(
        differing.is_empty() && outputs[0].len() == outputs[1].len() && csvs > 0,
        format!(
            "{} files ({csvs} CSV) compared, {} differ{}",
            outputs[0].len(),
            differing.len(),
            differing
                .first()
                .map(|p| format!(", first {p:?}"))
                .unwrap_or_default()
        ),
    )
}

struct SeedResult {
    nrmse: [f64; 2],
    ic: [f64; 2],
    significant: usize,
}

fn small_space() -> SearchSpace {
    SearchSpace {
        hidden_size: (4, 12),
        num_layers: (1, 1),
        dropout: (0.0, 0.0),
        learning_rate: (3e-3, 2e-2),
        weight_decay: (1e-8, 1e-5),
        history_length: (5, 8),
    }
}

fn synthetic_forecasts(seed: u64) -> Result<SeedResult, String> {
    let market = generate_market(&MarketConfig::default(), 2000 + seed);
    let signal = signal_series(&market, "signal", Orientation::Bond, 0.3, seed);
    let permuted = permuted_series(&signal, "permuted", seed + 1);
    let options = TrainOptions {
        max_epochs: 40,
        patience: 6,
        ..TrainOptions::default()
    };
    let mut nrmse = [0.0; 2];
    let mut ic = [0.0; 2];
    let mut errors = BTreeMap::new();
    for (k, bars) in market.bars.values().enumerate() {
        for (m, series) in [&signal, &permuted].into_iter().enumerate() {
            let input = SearchInput {
                series: vec![(bars.as_slice(), series)],
                fractions: SplitFractions::default(),
            };
            let (_, run, _) = search(
                &input,
                &small_space(),
                &QuasiRandomSampler,
                3,
                seed * 10 + k as u64,
                &options,
            )
            .map_err(|e| e.to_string())?;
            let metrics = run.metrics.clone().ok_or("no metrics")?;
            nrmse[m] += metrics.nrmse.ok_or("nrmse absent")? / 3.0;
            ic[m] += metrics.ic.ok_or("ic absent")? / 3.0;
            errors.insert(
                (bars[0].instrument_id.clone(), series.model_id.clone()),
                run.predictions
                    .iter()
                    .map(|p| (p.date, p.error()))
                    .collect::<Vec<_>>(),
            );
        }
    }
    let models = vec!["signal".to_string(), "permuted".to_string()];
    let dm = pipeline::dm_matrix(
        &errors,
        &models,
        "signal",
        DmOptions {
            lag: LagChoice::Automatic,
            harvey: false,
        },
    );
    Ok(SeedResult {
        nrmse,
        ic,
        significant: dm.iter().filter(|r| r.significant_5pct).count(),
    })
}

fn planted_signal_forecasts() -> Outcome {
    let t = Instant::now();
    let mut wins = 0;
    let mut with_significant = 0;
    let mut failures = Vec::new();
    let mut lines = Vec::new();
    for seed in 0..10 {
        match synthetic_forecasts(seed) {
            Ok(r) => {
                if r.nrmse[0] < r.nrmse[1] && r.ic[0] > r.ic[1] {
                    wins += 1;
                }
                if r.significant >= 1 {
                    with_significant += 1;
                }
                lines.push(format!(
                    "{:.3}/{:.3} {:.2}/{:.2} {}",
                    r.nrmse[0], r.nrmse[1], r.ic[0], r.ic[1], r.significant
                ));
            }
            Err(e) => failures.push(format!("seed {seed}: {e}")),
        }
    }
    for l in &lines {
        println!("        nRMSE signal/permuted, IC signal/permuted, DM-significant: {l}");
    }
    within(
        Duration::from_secs(15 * 60),
        t,
        check(
            failures.is_empty() && wins >= 8 && with_significant == 10,
            format!(
                "signal beats permuted on nRMSE and IC in {wins}/10 seeds; DM flags >=1 instrument in {with_significant}/10 seeds; errors {failures:?}"
            ),
        ),
    )
}

fn planted_signal_accuracy() -> Outcome {
    let market = generate_market(&MarketConfig::default(), 2000);
    let signal = signal_series(&market, "signal", Orientation::Bond, 0.3, 0);
    let permuted = permuted_series(&signal, "permuted", 1);
    let pooled = pooled_series(&market.bars);
    let accuracy = |s: &DailySentimentSeries| {
        let shocks = detect_shocks(s, 10.0).unwrap();
        let pairs = align(&shocks, &pooled, &market.calendar).unwrap();
        directional_accuracy(&pairs, true).unwrap()
    };
    let a = accuracy(&signal);
    let b = accuracy(&permuted);
    let (lo, hi) = b.interval(1.959964);
    check(
        a.accuracy > 0.5 && a.p_value < 0.05 && lo <= 0.5 && 0.5 <= hi,
        format!(
            "signal {:.3} on {} events (p = {:.2e}); permuted {:.3} on {} events, 95% CI [{lo:.3}, {hi:.3}]",
            a.accuracy, a.n_events, a.p_value, b.accuracy, b.n_events
        ),
    )
}

fn leakage_guard() -> Outcome {
    let mut detected = 0;
    let mut clean = 0;
    let cases = 5;
    for seed in 0..cases {
        let market = generate_market(&MarketConfig::default(), 3000 + seed);
        let signal = signal_series(&market, "signal", Orientation::Bond, 0.3, seed);
        let bars: Vec<DailyBar> = market
            .bars
            .values()
            .next()
            .unwrap()
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let mut b = b.clone();
                b.price += 0.02 * i as f64;
                b
            })
            .collect();
        let ds = build_windows(&bars, &signal, 5, SplitFractions::default()).unwrap();
        let lc = leakage_check(&ds).unwrap();
        if lc.all_data_differs {
            detected += 1;
        }
        if lc.train_only_matches {
            clean += 1;
        }
    }
    check(
        detected == cases && clean == cases,
        format!("trending fixtures: all-data scalers differ in {detected}/{cases}, train-only refit matches in {clean}/{cases}"),
    )
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("NDI exactness", ndi_exactness),
        ("percentile/shock oracle equivalence", shock_oracle),
        (
            "Pearson and Newey-West oracle equivalence",
            pearson_newey_west_oracle,
        ),
        ("DM test sanity", dm_sanity),
        ("LSTM gradient check", gradient_check),
        ("forecast determinism", forecast_determinism),
        (
            "planted signal: forecast nRMSE, IC and DM",
            planted_signal_forecasts,
        ),
        (
            "planted signal: shock-day directional accuracy",
            planted_signal_accuracy,
        ),
        ("leakage guard", leakage_guard),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let o = f();
        if !o.passed {
            failed += 1;
        }
        println!(
            "[{}] {name}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("acceptance: {failed} failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
