//! Seeded hyperparameter search for the forecaster.
//!
//! The default [`QuasiRandomSampler`] walks a Halton sequence with a seeded
//! Cranley-Patterson shift over the unit cube, so trial `i` depends only on
//! `(seed, i)` and trials run in parallel. [`TpeSampler`] is an adaptive
//! alternative that conditions on finished trials and therefore runs them one
//! at a time.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecast::{self, ForecastRun, SplitFractions, TrainOptions, WindowedDataset};
use crate::market_data::DailyBar;
use crate::sentiment::DailySentimentSeries;

pub const DEFAULT_BUDGET: usize = 30;
pub const DIMENSIONS: usize = 6;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("budget must be at least 1")]
    ZeroBudget,
    #[error("invalid search space: {0}")]
    Space(String),
    #[error("all {} trials failed", .0.trials.len())]
    AllFailed(Box<SearchReport>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub hidden_size: usize,
    pub num_layers: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub history_length: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpace {
    pub hidden_size: (usize, usize),
    pub num_layers: (usize, usize),
    pub dropout: (f64, f64),
    pub learning_rate: (f64, f64),
    pub weight_decay: (f64, f64),
    pub history_length: (usize, usize),
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            hidden_size: (8, 128),
            num_layers: (1, 3),
            dropout: (0.0, 0.5),
            learning_rate: (1e-5, 1e-2),
            weight_decay: (1e-8, 1e-2),
            history_length: (5, 60),
        }
    }
}

fn decode_int((lo, hi): (usize, usize), u: f64) -> usize {
    let span = (hi - lo + 1) as f64;
    (lo + (u * span).floor() as usize).min(hi)
}

fn encode_int((lo, hi): (usize, usize), v: usize) -> f64 {
    (v.saturating_sub(lo) as f64 + 0.5) / (hi - lo + 1) as f64
}

fn decode_log((lo, hi): (f64, f64), u: f64) -> f64 {
    if lo == hi {
        return lo;
    }
    (lo.ln() + u * (hi.ln() - lo.ln())).exp().clamp(lo, hi)
}

fn encode_log((lo, hi): (f64, f64), v: f64) -> f64 {
    if lo == hi {
        return 0.5;
    }
    ((v.ln() - lo.ln()) / (hi.ln() - lo.ln())).clamp(0.0, 1.0)
}

impl SearchSpace {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::Space(m.into()));
        let ints = [self.hidden_size, self.num_layers, self.history_length];
        if ints.iter().any(|(lo, hi)| lo > hi || *lo == 0) {
            return bad("integer ranges need 1 <= lo <= hi");
        }
        let (dlo, dhi) = self.dropout;
        if !(0.0 <= dlo && dlo <= dhi && dhi < 1.0) {
            return bad("dropout range must lie in [0, 1)");
        }
        for (lo, hi) in [self.learning_rate, self.weight_decay] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return bad("log-scaled ranges need 0 < lo <= hi");
            }
        }
        Ok(())
    }

    /// Maps a point of the unit cube to hyperparameters. Dimensions are, in
    /// order: hidden size, layers, dropout, learning rate, weight decay,
    /// history length.
    pub fn decode(&self, u: [f64; DIMENSIONS]) -> HyperParams {
        let num_layers = decode_int(self.num_layers, u[1]);
        let dropout = if num_layers == 1 {
            0.0
        } else {
            self.dropout.0 + u[2] * (self.dropout.1 - self.dropout.0)
        };
        HyperParams {
            hidden_size: decode_int(self.hidden_size, u[0]),
            num_layers,
            dropout,
            learning_rate: decode_log(self.learning_rate, u[3]),
            weight_decay: decode_log(self.weight_decay, u[4]),
            history_length: decode_int(self.history_length, u[5]),
        }
    }

    pub fn encode(&self, hp: &HyperParams) -> [f64; DIMENSIONS] {
        let (dlo, dhi) = self.dropout;
        [
            encode_int(self.hidden_size, hp.hidden_size),
            encode_int(self.num_layers, hp.num_layers),
            if dhi > dlo {
                (hp.dropout - dlo) / (dhi - dlo)
            } else {
                0.5
            },
            encode_log(self.learning_rate, hp.learning_rate),
            encode_log(self.weight_decay, hp.weight_decay),
            encode_int(self.history_length, hp.history_length),
        ]
    }

    pub fn contains(&self, hp: &HyperParams) -> bool {
        let within = |(lo, hi): (usize, usize), v: usize| lo <= v && v <= hi;
        let within_f = |(lo, hi): (f64, f64), v: f64| lo <= v && v <= hi;
        within(self.hidden_size, hp.hidden_size)
            && within(self.num_layers, hp.num_layers)
            && (hp.dropout == 0.0 || within_f(self.dropout, hp.dropout))
            && (hp.num_layers > 1 || hp.dropout == 0.0)
            && within_f(self.learning_rate, hp.learning_rate)
            && within_f(self.weight_decay, hp.weight_decay)
            && within(self.history_length, hp.history_length)
    }
}

/// SplitMix64 finalizer over `seed` and a stream index.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub trait Sampler: Sync {
    fn name(&self) -> &'static str;
    /// Whether [`sample`](Self::sample) reads `history`; adaptive samplers
    /// force sequential trials.
    fn is_adaptive(&self) -> bool;
    /// Hyperparameters for trial `trial`, deterministic in its arguments.
    fn sample(
        &self,
        space: &SearchSpace,
        seed: u64,
        trial: usize,
        history: &[Trial],
    ) -> HyperParams;
}

const PRIMES: [u64; DIMENSIONS] = [2, 3, 5, 7, 11, 13];

pub fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    r
}

#[derive(Debug, Clone, Copy, Default)]
pub struct QuasiRandomSampler;

impl QuasiRandomSampler {
    pub fn point(seed: u64, trial: usize) -> [f64; DIMENSIONS] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = [0.0; DIMENSIONS];
        for (d, slot) in u.iter_mut().enumerate() {
            let shift: f64 = rng.gen();
            let v = radical_inverse(trial as u64 + 1, PRIMES[d]) + shift;
            *slot = v - v.floor();
        }
        u
    }
}

impl Sampler for QuasiRandomSampler {
    fn name(&self) -> &'static str {
        "halton"
    }

    fn is_adaptive(&self) -> bool {
        false
    }

    fn sample(
        &self,
        space: &SearchSpace,
        seed: u64,
        trial: usize,
        _history: &[Trial],
    ) -> HyperParams {
        space.decode(Self::point(seed, trial))
    }
}

/// Tree-structured Parzen estimator over the unit cube with independent
/// per-dimension Gaussian kernels.
#[derive(Debug, Clone, Copy)]
pub struct TpeSampler {
    /// Trials drawn quasi-randomly before the model kicks in.
    pub startup_trials: usize,
    pub candidates: usize,
    /// Fraction of finished trials treated as good.
    pub gamma: f64,
}

impl Default for TpeSampler {
    fn default() -> Self {
        Self {
            startup_trials: 10,
            candidates: 24,
            gamma: 0.25,
        }
    }
}

fn parzen(points: &[[f64; DIMENSIONS]], x: &[f64; DIMENSIONS], bandwidth: f64) -> f64 {
    let mut log_density = 0.0;
    for d in 0..DIMENSIONS {
        let prior = 1.0;
        let kernel: f64 = points
            .iter()
            .map(|p| (-0.5 * ((x[d] - p[d]) / bandwidth).powi(2)).exp() / bandwidth)
            .sum();
        log_density += ((kernel + prior) / (points.len() as f64 + 1.0)).ln();
    }
    log_density
}

impl Sampler for TpeSampler {
    fn name(&self) -> &'static str {
        "tpe"
    }

    fn is_adaptive(&self) -> bool {
        true
    }

    fn sample(
        &self,
        space: &SearchSpace,
        seed: u64,
        trial: usize,
        history: &[Trial],
    ) -> HyperParams {
        let mut done: Vec<(f64, [f64; DIMENSIONS])> = history
            .iter()
            .filter_map(|t| t.validation_loss.map(|l| (l, space.encode(&t.params))))
            .collect();
        if done.len() < self.startup_trials.max(2) {
            return space.decode(QuasiRandomSampler::point(seed, trial));
        }
        done.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n_good = ((done.len() as f64 * self.gamma).ceil() as usize).clamp(1, done.len() - 1);
        let good: Vec<[f64; DIMENSIONS]> = done[..n_good].iter().map(|d| d.1).collect();
        let bad: Vec<[f64; DIMENSIONS]> = done[n_good..].iter().map(|d| d.1).collect();
        let bandwidth = (done.len() as f64).powf(-1.0 / (DIMENSIONS as f64 + 4.0)) * 0.3;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, trial as u64));
        let mut best = (f64::NEG_INFINITY, good[0]);
        for _ in 0..self.candidates {
            let center = good[rng.gen_range(0..good.len())];
            let mut x = [0.0; DIMENSIONS];
            for d in 0..DIMENSIONS {
                let z: f64 = rng.sample(StandardNormal);
                x[d] = (center[d] + bandwidth * z).clamp(0.0, 1.0 - 1e-12);
            }
            let score = parzen(&good, &x, bandwidth) - parzen(&bad, &x, bandwidth);
            if score > best.0 {
                best = (score, x);
            }
        }
        space.decode(best.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum TrialStatus {
    Complete,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub seed: u64,
    pub params: HyperParams,
    pub validation_loss: Option<f64>,
    pub status: TrialStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub seed: u64,
    pub budget: usize,
    pub sampler: String,
    pub trials: Vec<Trial>,
    pub best: Option<usize>,
}

impl SearchReport {
    pub fn best_trial(&self) -> Option<&Trial> {
        self.best.map(|i| &self.trials[i])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Trials sorted by validation loss, failures last.
    pub fn ranked_table(&self) -> String {
        let mut order: Vec<&Trial> = self.trials.iter().collect();
        order.sort_by(|a, b| match (a.validation_loss, b.validation_loss) {
            (Some(x), Some(y)) => x.total_cmp(&y).then(a.index.cmp(&b.index)),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => a.index.cmp(&b.index),
        });
        let mut s = String::from(
            "rank trial hidden layers dropout   lr        wd        history  val_loss\n",
        );
        for (rank, t) in order.iter().enumerate() {
            let p = &t.params;
            let loss = match (&t.status, t.validation_loss) {
                (_, Some(l)) => format!("{l:.6}"),
                (TrialStatus::Failed(r), None) => format!("failed: {r}"),
                _ => "-".into(),
            };
            let _ = writeln!(
                s,
                "{:>4} {:>5} {:>6} {:>6} {:>7.3} {:>9.2e} {:>9.2e} {:>7}  {loss}",
                rank + 1,
                t.index,
                p.hidden_size,
                p.num_layers,
                p.dropout,
                p.learning_rate,
                p.weight_decay,
                p.history_length
            );
        }
        s
    }
}

fn select_best(trials: &[Trial]) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for t in trials {
        if let Some(l) = t.validation_loss.filter(|l| l.is_finite()) {
            if best.is_none_or(|(b, _)| l < b) {
                best = Some((l, t.index));
            }
        }
    }
    best.map(|b| b.1)
}

/// Runs `budget` trials of `objective` and returns the report together with
/// the payload of the best trial.
///
/// `objective` receives the sampled hyperparameters and a per-trial seed and
/// returns the validation loss plus any payload to keep for the winner.
pub fn search_with<P, F>(
    space: &SearchSpace,
    sampler: &dyn Sampler,
    budget: usize,
    seed: u64,
    objective: F,
) -> Result<(SearchReport, P), SearchError>
where
    P: Send,
    F: Fn(&HyperParams, u64) -> Result<(f64, P), String> + Sync,
{
    if budget == 0 {
        return Err(SearchError::ZeroBudget);
    }
    space.validate()?;
    let run = |index: usize, params: HyperParams| -> (Trial, Option<P>) {
        let trial_seed = derive_seed(seed, index as u64);
        let (status, loss, payload) = match objective(&params, trial_seed) {
            Ok((l, p)) if l.is_finite() => (TrialStatus::Complete, Some(l), Some(p)),
            Ok((l, _)) => (
                TrialStatus::Failed(format!("non-finite loss {l}")),
                None,
                None,
            ),
            Err(e) => (TrialStatus::Failed(e), None, None),
        };
        let trial = Trial {
            index,
            seed: trial_seed,
            params,
            validation_loss: loss,
            status,
        };
        (trial, payload)
    };

    let results: Vec<(Trial, Option<P>)> = if sampler.is_adaptive() {
        let mut out: Vec<(Trial, Option<P>)> = Vec::with_capacity(budget);
        for i in 0..budget {
            let history: Vec<Trial> = out.iter().map(|(t, _)| t.clone()).collect();
            let params = sampler.sample(space, seed, i, &history);
            out.push(run(i, params));
        }
        out
    } else {
        let params: Vec<HyperParams> = (0..budget)
            .map(|i| sampler.sample(space, seed, i, &[]))
            .collect();
        params
            .into_par_iter()
            .enumerate()
            .map(|(i, p)| run(i, p))
            .collect()
    };

    let (trials, mut payloads): (Vec<Trial>, Vec<Option<P>>) = results.into_iter().unzip();
    let best = select_best(&trials);
    let report = SearchReport {
        seed,
        budget,
        sampler: sampler.name().into(),
        trials,
        best,
    };
    match best {
        Some(i) => {
            let payload = payloads[i].take().expect("complete trials carry a payload");
            Ok((report, payload))
        }
        None => Err(SearchError::AllFailed(Box::new(report))),
    }
}

/// Price and sentiment series searched over; windows are rebuilt per trial
/// because the history length is a hyperparameter.
#[derive(Debug, Clone)]
pub struct SearchInput<'a> {
    pub series: Vec<(&'a [DailyBar], &'a DailySentimentSeries)>,
    pub fractions: SplitFractions,
}

/// Trains one forecaster per trial and selects by validation MSE.
pub fn search(
    input: &SearchInput<'_>,
    space: &SearchSpace,
    sampler: &dyn Sampler,
    budget: usize,
    seed: u64,
    options: &TrainOptions,
) -> Result<(SearchReport, ForecastRun, WindowedDataset), SearchError> {
    let (report, (run, dataset)) = search_with(space, sampler, budget, seed, |hp, trial_seed| {
        let dataset =
            forecast::build_pooled_windows(&input.series, hp.history_length, input.fractions)
                .map_err(|e| e.to_string())?;
        let run = forecast::train(&dataset, hp, options, trial_seed).map_err(|e| e.to_string())?;
        if let forecast::RunStatus::Diverged { epoch } = run.status {
            return Err(format!("diverged at epoch {epoch}"));
        }
        Ok((run.best_validation_loss, (run, dataset)))
    })?;
    Ok((report, run, dataset))
}
