//! Shatter coefficients of halfspaces on small point sets, Sauer's bound,
//! and how the deviation bounds fall with the sample size.
//!
//! cargo run --example shatter_bounds

use mincap::rng::stream;
use mincap::vcbound::{certified_ratio, deviation_bound, empirical_shatter, sauer_bound};
use mincap::BoundVariant;
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> mincap::Result<()> {
    let mut rng = stream(1, 0);
    println!("{:>3} {:>3} {:>8} {:>8} {:>8}", "d", "n", "shatter", "2^n", "n^d");
    for d in 1..=3usize {
        for n in [2usize, 4, 6, 8] {
            let pts: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
                .collect();
            let count = empirical_shatter(&pts)?;
            println!("{d:>3} {n:>3} {count:>8} {:>8} {:>8}", 1u32 << n, (n as u64).pow(d as u32));
        }
    }
    println!("sauer_bound(10, 3) = {}", sauer_bound(10, 3));

    let (x, v) = (0.5 / 76.34, 4);
    println!("\n{:>10} {:>12} {:>12}", "n", "devroye", "basic");
    for n in [100_000u64, 1_000_000, 1_400_000, 10_000_000, 100_000_000] {
        println!(
            "{n:>10} {:>12.3e} {:>12.3e}",
            deviation_bound(n, x, v, BoundVariant::Devroye),
            deviation_bound(n, x, v, BoundVariant::Basic)
        );
    }
    println!(
        "1.4M samples certify x = {:.6} at delta = 0.05",
        certified_ratio(1_400_000, 0.05, v, BoundVariant::Devroye)
    );
    Ok(())
}
