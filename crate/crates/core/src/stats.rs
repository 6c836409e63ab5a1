//! Shared statistical primitives.
//!
//! Everything here is a pure function over slices. The estimators follow the
//! usual textbook conventions:
//!
//! - [`percentile`] is the linear-interpolation order-statistic estimator
//!   (`h = (n - 1) q / 100`), the same rule NumPy uses by default.
//! - [`newey_west_variance`] uses the Bartlett kernel with autocovariances
//!   normalised by `1/n`, so lag 0 collapses to the biased sample variance.
//! - [`dm_test`] compares two forecast-error series under squared-error loss
//!   and reports an asymptotic normal p-value.

use libm::erfc;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Floor applied to a non-positive long-run variance estimate.
pub const VARIANCE_FLOOR: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {required} observations, got {got}")]
    TooShort { required: usize, got: usize },
    #[error("correlation undefined: zero variance in {0}")]
    ZeroVariance(&'static str),
    #[error("lag {lag} must be smaller than the series length {n}")]
    LagTooLarge { lag: usize, n: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
}

fn check_finite(xs: &[f64]) -> Result<(), StatsError> {
    match xs.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(StatsError::NonFinite(i)),
        None => Ok(()),
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// A sum of squared deviations no larger than rounding noise on the values
/// themselves, e.g. from a moving average of a constant.
fn negligible_spread(ss: f64, xs: &[f64], m: f64) -> bool {
    let scale = xs.iter().fold(m.abs(), |a, v| a.max(v.abs()));
    ss <= xs.len() as f64 * (64.0 * f64::EPSILON * scale).powi(2)
}

/// Product-moment correlation of two equal-length series.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooShort {
            required: 3,
            got: x.len(),
        });
    }
    check_finite(x)?;
    check_finite(y)?;
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if negligible_spread(sxx, x, mx) {
        return Err(StatsError::ZeroVariance("x"));
    }
    if negligible_spread(syy, y, my) {
        return Err(StatsError::ZeroVariance("y"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Average ranks (ties share the mean rank), 1-based.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            out[idx[k]] = r;
        }
        i = j + 1;
    }
    out
}

/// Rank correlation: Pearson on average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    check_finite(x)?;
    check_finite(y)?;
    pearson(&ranks(x), &ranks(y))
}

/// Linear-interpolation percentile of an already sorted, nonempty slice.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q / 100.0;
    let lo = (h.floor() as usize).min(n - 1);
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Linear-interpolation percentile, `q` in `[0, 100]`. Returns NaN for an
/// empty slice.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    percentile_sorted(&sorted, q.clamp(0.0, 100.0))
}

/// Long-run variance estimate from the Bartlett-kernel HAC estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LongRunVariance {
    pub value: f64,
    /// The raw estimate was non-positive and has been replaced by the floor.
    pub degenerate: bool,
}

/// Lag-`j` autocovariance about the sample mean, `1/n` normalised.
fn autocovariance(centered: &[f64], j: usize) -> f64 {
    let n = centered.len();
    let s: f64 = centered[j..]
        .iter()
        .zip(&centered[..n - j])
        .map(|(a, b)| a * b)
        .sum();
    s / n as f64
}

/// Newey-West long-run variance: `γ0 + 2 Σ_{j=1..lag} (1 - j/(lag+1)) γj`.
pub fn newey_west_variance(d: &[f64], lag: usize) -> Result<LongRunVariance, StatsError> {
    let n = d.len();
    if n < 2 {
        return Err(StatsError::TooShort {
            required: 2,
            got: n,
        });
    }
    if lag >= n {
        return Err(StatsError::LagTooLarge { lag, n });
    }
    check_finite(d)?;
    let m = mean(d);
    let centered: Vec<f64> = d.iter().map(|v| v - m).collect();
    let mut value = autocovariance(&centered, 0);
    for j in 1..=lag {
        let w = 1.0 - j as f64 / (lag + 1) as f64;
        value += 2.0 * w * autocovariance(&centered, j);
    }
    if value > 0.0 {
        Ok(LongRunVariance {
            value,
            degenerate: false,
        })
    } else {
        Ok(LongRunVariance {
            value: VARIANCE_FLOOR,
            degenerate: true,
        })
    }
}

/// Bandwidth rule `floor(4 (n/100)^(2/9))`, capped below `n`.
pub fn automatic_lag(n: usize) -> usize {
    let l = (4.0 * (n as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize;
    l.min(n.saturating_sub(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum LagChoice {
    #[default]
    Automatic,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct DmOptions {
    pub lag: LagChoice,
    /// Harvey, Leybourne and Newbold small-sample correction of the statistic.
    pub harvey: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmResult {
    pub dm_stat: f64,
    pub p_value: f64,
    pub lag: usize,
    pub n: usize,
    pub mean_differential: f64,
    pub degenerate: bool,
}

impl DmResult {
    /// Positive statistic: the first series has the larger loss.
    pub fn significant(&self, level: f64) -> bool {
        self.p_value < level
    }
}

/// Squared-error loss differential `a_t^2 - b_t^2`.
pub fn loss_differential(errors_a: &[f64], errors_b: &[f64]) -> Vec<f64> {
    errors_a
        .iter()
        .zip(errors_b)
        .map(|(a, b)| a * a - b * b)
        .collect()
}

/// Diebold-Mariano test of equal predictive accuracy under squared-error loss.
pub fn dm_test(
    errors_a: &[f64],
    errors_b: &[f64],
    opts: DmOptions,
) -> Result<DmResult, StatsError> {
    if errors_a.len() != errors_b.len() {
        return Err(StatsError::LengthMismatch(errors_a.len(), errors_b.len()));
    }
    let n = errors_a.len();
    if n < 10 {
        return Err(StatsError::TooShort {
            required: 10,
            got: n,
        });
    }
    check_finite(errors_a)?;
    check_finite(errors_b)?;
    let lag = match opts.lag {
        LagChoice::Automatic => automatic_lag(n),
        LagChoice::Fixed(l) => l,
    };
    let d = loss_differential(errors_a, errors_b);
    let mean_differential = mean(&d);
    let lrv = newey_west_variance(&d, lag)?;
    if lrv.degenerate && mean_differential == 0.0 {
        return Ok(DmResult {
            dm_stat: 0.0,
            p_value: 1.0,
            lag,
            n,
            mean_differential,
            degenerate: true,
        });
    }
    let mut dm_stat = mean_differential / (lrv.value / n as f64).sqrt();
    if opts.harvey {
        let nf = n as f64;
        let h = (lag + 1) as f64;
        let k = ((nf + 1.0 - 2.0 * h + h * (h - 1.0) / nf) / nf).max(0.0);
        dm_stat *= k.sqrt();
    }
    Ok(DmResult {
        dm_stat,
        p_value: two_sided_normal_p(dm_stat),
        lag,
        n,
        mean_differential,
        degenerate: lrv.degenerate,
    })
}

/// `2 (1 - Φ(|z|))`, computed through `erfc` so small tail probabilities
/// keep their relative precision.
pub fn two_sided_normal_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Natural log of `n choose k`.
fn ln_choose(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    (0..k)
        .map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln())
        .sum()
}

/// Exact two-sided binomial test of `successes` out of `trials` against
/// p = 0.5: `2 P(X ≥ max(k, n - k))`, capped at 1.
pub fn binomial_two_sided_half(successes: u64, trials: u64) -> f64 {
    if trials == 0 {
        return 1.0;
    }
    let k = successes.max(trials - successes);
    let ln_half_n = trials as f64 * 0.5f64.ln();
    let tail: f64 = (k..=trials)
        .map(|j| (ln_choose(trials, j) + ln_half_n).exp())
        .sum();
    (2.0 * tail).min(1.0)
}

/// Wilson score interval for a binomial proportion at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
        rng.sample(StandardNormal)
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 3.0).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        // cov = 1.0 (sum of products 4 / ... ) hand-computed r = 4/5
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-15);
    }

    #[test]
    fn pearson_errors() {
        assert_eq!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(StatsError::ZeroVariance("x"))
        );
        assert!(matches!(
            pearson(&[1.0, 2.0], &[1.0, 2.0]),
            Err(StatsError::TooShort { .. })
        ));
        assert!(matches!(
            pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]),
            Err(StatsError::LengthMismatch(3, 2))
        ));
    }

    #[test]
    fn spearman_is_monotone_invariant() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [1.0, 8.0, 27.0, 64.0, 125.0];
        assert!((spearman(&x, &y).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(ranks(&[3.0, 1.0, 3.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn percentile_examples() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0, 5.0], 50.0), 3.0);
        assert_eq!(percentile(&[10.0, 20.0], 25.0), 12.5);
        for q in [1.0, 10.0, 50.0, 99.0] {
            assert_eq!(percentile(&[7.5; 9], q), 7.5);
        }
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((percentile(&v, 10.0) - 10.9).abs() < 1e-12);
        assert!((percentile(&v, 90.0) - 90.1).abs() < 1e-12);
    }

    #[test]
    fn newey_west_lag_zero_is_biased_variance() {
        let d = [1.0, 4.0, 2.0, 8.0, 5.0];
        let m = mean(&d);
        let var = d.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / d.len() as f64;
        let lrv = newey_west_variance(&d, 0).unwrap();
        assert_eq!(lrv.value, var);
        assert!(!lrv.degenerate);
    }

    #[test]
    fn newey_west_constant_is_floored() {
        let lrv = newey_west_variance(&[3.0; 20], 2).unwrap();
        assert!(lrv.degenerate);
        assert_eq!(lrv.value, VARIANCE_FLOOR);
        assert!(matches!(
            newey_west_variance(&[1.0, 2.0], 2),
            Err(StatsError::LagTooLarge { lag: 2, n: 2 })
        ));
    }

    #[test]
    fn newey_west_iid_normal_close_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let d: Vec<f64> = (0..10_000).map(|_| standard_normal(&mut rng)).collect();
            let lrv = newey_west_variance(&d, 5).unwrap();
            assert!((lrv.value - 1.0).abs() < 0.1, "{}", lrv.value);
        }
    }

    #[test]
    fn automatic_lag_rule() {
        assert_eq!(automatic_lag(100), 4);
        assert_eq!(automatic_lag(500), 5);
        assert_eq!(automatic_lag(10), 2);
        assert_eq!(automatic_lag(1), 0);
    }

    #[test]
    fn dm_identical_errors_degenerate() {
        let e: Vec<f64> = (0..30).map(|i| (i as f64 * 0.7).sin()).collect();
        let r = dm_test(&e, &e, DmOptions::default()).unwrap();
        assert_eq!(r.dm_stat, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert!(r.degenerate);
    }

    #[test]
    fn dm_sign_favours_smaller_errors() {
        let b: Vec<f64> = (0..50).map(|i| (i as f64 * 1.3).sin() + 0.1).collect();
        let a: Vec<f64> = b.iter().map(|v| 2.0 * v).collect();
        let r = dm_test(&a, &b, DmOptions::default()).unwrap();
        assert!(r.mean_differential > 0.0);
        assert!(r.dm_stat > 0.0);
        let rev = dm_test(&b, &a, DmOptions::default()).unwrap();
        assert_eq!(rev.dm_stat, -r.dm_stat);
        assert_eq!(rev.p_value, r.p_value);
    }

    #[test]
    fn dm_harvey_shrinks_statistic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..40).map(|_| standard_normal(&mut rng)).collect();
        let b: Vec<f64> = (0..40).map(|_| 1.5 * standard_normal(&mut rng)).collect();
        let plain = dm_test(&a, &b, DmOptions::default()).unwrap();
        let adj = dm_test(
            &a,
            &b,
            DmOptions {
                harvey: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(adj.dm_stat.abs() < plain.dm_stat.abs());
        assert!(adj.p_value > plain.p_value);
    }

    /// Simpson's rule on the normal density, 20k panels per unit of z.
    fn simpson_two_sided_p(z: f64) -> f64 {
        let z = z.abs();
        let panels = ((z * 20_000.0).ceil() as usize).max(2) & !1;
        let h = z / panels as f64;
        let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = pdf(0.0) + pdf(z);
        for i in 1..panels {
            s += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        1.0 - 2.0 * s * h / 3.0
    }

    #[test]
    fn dm_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for n in [40usize, 120, 300] {
            let a: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
            let b: Vec<f64> = (0..n).map(|_| 1.15 * standard_normal(&mut rng)).collect();
            let lag = (4.0 * (n as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize;
            let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * x - y * y).collect();
            let m = d.iter().sum::<f64>() / n as f64;
            let mut lrv = 0.0;
            for j in 0..=lag {
                let g = (j..n).map(|t| (d[t] - m) * (d[t - j] - m)).sum::<f64>() / n as f64;
                let w = if j == 0 {
                    1.0
                } else {
                    2.0 * (1.0 - j as f64 / (lag + 1) as f64)
                };
                lrv += w * g;
            }
            let stat = m / (lrv / n as f64).sqrt();
            let r = dm_test(&a, &b, DmOptions::default()).unwrap();
            assert_eq!(r.lag, lag);
            assert!((r.dm_stat - stat).abs() < 1e-10, "{} vs {stat}", r.dm_stat);
            assert!((r.p_value - simpson_two_sided_p(stat)).abs() < 1e-10);
        }
    }

    #[test]
    fn dm_rejects_short_input() {
        assert!(matches!(
            dm_test(&[1.0; 9], &[2.0; 9], DmOptions::default()),
            Err(StatsError::TooShort {
                required: 10,
                got: 9
            })
        ));
    }

    #[test]
    fn normal_cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.959964) - 0.975).abs() < 1e-6);
        assert!((normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-14);
        assert!((normal_cdf(-2.5) - 0.006_209_665_325_776_135).abs() < 1e-15);
        for i in -400..=400 {
            let z = i as f64 * 0.0173;
            assert!((normal_cdf(z) + normal_cdf(-z) - 1.0).abs() < 1e-12);
        }
        let mut prev = 0.0;
        for i in -10_000..=10_000 {
            let p = normal_cdf(i as f64 * 1e-3);
            assert!(p >= prev);
            prev = p;
        }
    }

    #[test]
    fn binomial_exact_examples() {
        // 2 * (C(8,6) + C(8,7) + C(8,8)) / 256 = 74/256
        assert!((binomial_two_sided_half(6, 8) - 74.0 / 256.0).abs() < 1e-14);
        assert!((binomial_two_sided_half(2, 8) - 74.0 / 256.0).abs() < 1e-14);
        assert_eq!(binomial_two_sided_half(4, 8), 1.0);
        assert!((binomial_two_sided_half(10, 10) - 2.0 / 1024.0).abs() < 1e-15);
    }

    #[test]
    fn wilson_covers_centre() {
        let (lo, hi) = wilson_interval(50, 100, 1.96);
        assert!(lo < 0.5 && hi > 0.5);
        let (lo, hi) = wilson_interval(90, 100, 1.96);
        assert!(lo > 0.8 && hi < 0.96);
    }
}
