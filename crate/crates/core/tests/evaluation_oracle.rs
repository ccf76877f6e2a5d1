//! Metric checks against closed forms and Monte-Carlo oracles.

use cqe_core::data::fine_grid;
use cqe_core::evaluation::{
    curve_mae, ks_critical_1pct, ks_uniform_statistic, pit_calibration_curve, pit_value, pit_values, wilson_interval,
    Z95,
};
use cqe_core::rng::{normal_quantile, standard_normal, substream};
use rand::Rng;

/// Wilson bounds evaluated directly from the textbook formula.
fn wilson_closed_form(s: u64, n: u64, z: f64) -> (f64, f64) {
    let n = n as f64;
    let p = s as f64 / n;
    let centre = p + z * z / (2.0 * n);
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt();
    let denom = 1.0 + z * z / n;
    ((centre - half) / denom, (centre + half) / denom)
}

#[test]
fn wilson_matches_closed_form() {
    let mut rng = substream(31, 0);
    for _ in 0..1000 {
        let n: u64 = rng.random_range(1..=5000);
        let s: u64 = rng.random_range(0..=n);
        let z = if rng.random::<bool>() { Z95 } else { rng.random_range(0.1..3.5) };
        let ci = wilson_interval(s, n, z).unwrap();
        let (lo, hi) = wilson_closed_form(s, n, z);
        assert!((ci.lo - lo.max(0.0)).abs() < 1e-9, "s={s} n={n} z={z}: {} vs {lo}", ci.lo);
        assert!((ci.hi - hi.min(1.0)).abs() < 1e-9, "s={s} n={n} z={z}: {} vs {hi}", ci.hi);
    }
}

#[test]
fn wilson_reference_value() {
    let ci = wilson_interval(50, 100, 1.96).unwrap();
    assert!((ci.lo - 0.4038).abs() < 1e-3 && (ci.hi - 0.5962).abs() < 1e-3, "{ci:?}");
}

fn normal_pits(n: usize, seed: u64) -> Vec<f64> {
    let levels = fine_grid();
    let mut rng = substream(seed, 0);
    (0..n)
        .map(|_| {
            // Heteroscedastic location-scale model with its true quantiles.
            let x = standard_normal(&mut rng);
            let (mu, sigma) = (1.0 + x, 0.5 + x.abs());
            let grid: Vec<(f64, f64)> = levels.iter().map(|&l| (l, mu + sigma * normal_quantile(l))).collect();
            let y = mu + sigma * standard_normal(&mut rng);
            pit_value(&grid, y).unwrap()
        })
        .collect()
}

#[test]
fn pit_of_true_gaussian_grid_is_uniform() {
    let pits = normal_pits(10_000, 32);
    assert!(pits.iter().all(|p| (0.0..=1.0).contains(p)));
    let d = ks_uniform_statistic(&pits);
    assert!(d < ks_critical_1pct(pits.len()), "KS {d}");
}

#[test]
fn pit_curve_of_oracle_is_near_diagonal() {
    let pits = normal_pits(10_000, 33);
    let curve = pit_calibration_curve(&pits, &fine_grid());
    let max_dev = curve.iter().map(|(l, c)| (c - l).abs()).fold(0.0, f64::max);
    assert!(max_dev < 0.03, "{max_dev}");
    assert!(curve_mae(&curve) < 0.01);
}

#[test]
fn crossing_grids_are_rearranged() {
    let levels = [0.25, 0.5, 0.75];
    let crossing = [3.0, 1.0, 2.0];
    assert_eq!(pit_values(&levels, &crossing, 2.0).unwrap(), 0.5);
    assert!(pit_values(&levels, &crossing, -100.0).unwrap() <= 0.25);
}

#[test]
fn pit_is_monotone_in_the_realised_value() {
    let levels = fine_grid();
    let mut rng = substream(34, 0);
    for _ in 0..50 {
        let mut q: Vec<f64> = levels.iter().map(|_| 3.0 * standard_normal(&mut rng)).collect();
        q.sort_by(f64::total_cmp);
        let mut prev = 0.0;
        for i in 0..400 {
            let y = -15.0 + i as f64 * 0.075;
            let p = pit_values(&levels, &q, y).unwrap();
            assert!(p >= prev - 1e-12 && (0.0..=1.0).contains(&p));
            prev = p;
        }
    }
}
