//! Distributional checks of the simulated processes.

use cqe_core::dgp::{simulate_ar1, simulate_ar2_exog, simulate_with, DgpSpec, Noise, NoiseHook};
use cqe_core::rng::substream;

const N: usize = 100_000;

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn quartiles(v: &mut [f64]) -> (f64, f64) {
    v.sort_by(f64::total_cmp);
    (v[v.len() / 4], v[3 * v.len() / 4])
}

fn variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

#[test]
fn cauchy_draws_have_unit_quartiles() {
    let mut rng = substream(41, 0);
    let mut e: Vec<f64> = (0..N).map(|_| Noise::Cauchy.draw(&mut rng)).collect();
    assert!(median(&mut e).abs() < 0.02);
    let (q1, q3) = quartiles(&mut e);
    assert!((q3 - q1 - 2.0).abs() < 0.05, "IQR {}", q3 - q1);
}

#[test]
fn t2_draws_match_tail_formula() {
    let mut rng = substream(42, 0);
    let mut e: Vec<f64> = (0..N).map(|_| Noise::StudentT2.draw(&mut rng)).collect();
    let tail = e.iter().filter(|v| v.abs() > 10.0).count() as f64 / N as f64;
    // P(|T| > x) = 1 - x / sqrt(2 + x^2) for two degrees of freedom.
    let expected = 1.0 - 10.0 / (102.0f64).sqrt();
    assert!((tail - expected).abs() < 0.003, "{tail} vs {expected}");
    assert!(median(&mut e).abs() < 0.02);
}

#[test]
fn near_unit_root_stationary_variance() {
    let frame = simulate_ar1(0.95, N, 43).unwrap();
    let v = variance(&frame.y);
    let expected = 1.0 / (1.0 - 0.95 * 0.95);
    assert!((v / expected - 1.0).abs() < 0.10, "{v} vs {expected}");
}

#[test]
fn exog_columns_have_bounded_variances() {
    // sigma_i ~ U(0, 10): every column variance lies in (0, 10) and their
    // average is near 5.
    let p = 200;
    let frame = simulate_ar2_exog(5_000, p, Noise::Normal, 44).unwrap();
    let x = frame.x.as_ref().unwrap();
    let vars: Vec<f64> = (0..p)
        .map(|j| variance(&(0..frame.len()).map(|t| x[t * p + j]).collect::<Vec<_>>()))
        .collect();
    assert!(vars.iter().all(|&v| v > 0.0 && v < 10.5), "{vars:?}");
    let mean = vars.iter().sum::<f64>() / p as f64;
    assert!((mean - 5.0).abs() < 0.8, "{mean}");
}

#[test]
fn forced_exog_recursion_reaches_fixed_point() {
    let n = 200;
    let hook = NoiseHook {
        innovations: Some(vec![0.0; n]),
        initial: Some(vec![0.0, 0.0]),
        beta: Some(vec![1.0]),
        exog: Some(vec![1.0; n]),
    };
    let frame = simulate_with(&DgpSpec::ar2_exog(1, Noise::Normal, 0), n, &hook).unwrap();
    assert!((frame.y[n - 1] - 1.0 / 0.7).abs() < 1e-9, "{}", frame.y[n - 1]);
}
