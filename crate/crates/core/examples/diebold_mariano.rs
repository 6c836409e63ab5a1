use bondlab::stats::{automatic_lag, dm_test, DmOptions, LagChoice};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 250;
    let mut ar = 0.0;
    let sharp: Vec<f64> = (0..n)
        .map(|_| {
            ar = 0.5 * ar + rng.sample::<f64, _>(StandardNormal);
            ar
        })
        .collect();
    let blunt: Vec<f64> = sharp
        .iter()
        .map(|e| 1.2 * e + 0.3 * rng.sample::<f64, _>(StandardNormal))
        .collect();

    println!("n = {n}, automatic lag = {}", automatic_lag(n));
    for (label, opts) in [
        (
            "auto lag",
            DmOptions {
                lag: LagChoice::Automatic,
                harvey: false,
            },
        ),
        (
            "auto lag, Harvey",
            DmOptions {
                lag: LagChoice::Automatic,
                harvey: true,
            },
        ),
        (
            "lag 0",
            DmOptions {
                lag: LagChoice::Fixed(0),
                harvey: false,
            },
        ),
    ] {
        let r = dm_test(&sharp, &blunt, opts).unwrap();
        println!(
            "{label:<17} DM = {:+.3}  p = {:.4}  lag {}",
            r.dm_stat, r.p_value, r.lag
        );
    }
    let same = dm_test(&sharp, &sharp, DmOptions::default()).unwrap();
    println!(
        "identical errors: p = {}, degenerate = {}",
        same.p_value, same.degenerate
    );
}
