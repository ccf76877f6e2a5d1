//! Linear quantile regression and forest checks against independent oracles.

use cqe_core::models::{fit_qr, fit_qrf, pinball_loss, QrfConfig};
use cqe_core::rng::{standard_normal, substream};
use cqe_core::{QuantileLevel, SupervisedSet};
use rand::Rng;

fn lvl(t: f64) -> QuantileLevel {
    QuantileLevel::new(t).unwrap()
}

/// Smallest q with F_n(q) >= tau.
fn sort_quantile(ys: &[f64], tau: f64) -> f64 {
    let mut s = ys.to_vec();
    s.sort_by(f64::total_cmp);
    let k = (tau * s.len() as f64).ceil() as usize;
    s[k.max(1) - 1]
}

#[test]
fn intercept_only_matches_sort_quantile() {
    let mut rng = substream(11, 0);
    let mut checked = 0;
    while checked < 1000 {
        let n = rng.random_range(2..=60);
        let tau: f64 = rng.random_range(0.01..0.99);
        // When n * tau is an integer the minimiser is a whole interval; the
        // oracle is only unique away from those points.
        let nt = n as f64 * tau;
        if (nt - nt.round()).abs() < 1e-6 {
            continue;
        }
        let ys: Vec<f64> = (0..n).map(|_| 10.0 * standard_normal(&mut rng)).collect();
        let data = SupervisedSet::targets_only(ys.clone()).unwrap();
        let model = fit_qr(&data, &[lvl(tau)]).unwrap();
        let b = model.coefficients(tau).unwrap()[0];
        let oracle = sort_quantile(&ys, tau);
        assert!((b - oracle).abs() <= 1e-8, "n={n} tau={tau}: {b} vs {oracle}");
        checked += 1;
    }
}

#[test]
fn intercept_only_on_tied_boundary_is_a_minimiser() {
    // n * tau = 2: every point of [y_(2), y_(3)] minimises the loss.
    let ys = vec![3.0, 1.0, 7.0, 5.0];
    let data = SupervisedSet::targets_only(ys.clone()).unwrap();
    let b = fit_qr(&data, &[lvl(0.5)]).unwrap().coefficients(0.5).unwrap()[0];
    assert!((3.0..=5.0).contains(&b), "{b}");
}

#[test]
fn skewed_sample_matches_grid_search() {
    let ys = vec![0.0, 0.0, 0.0, 0.0, 10.0];
    let data = SupervisedSet::targets_only(ys).unwrap();
    let b = fit_qr(&data, &[lvl(0.9)]).unwrap().coefficients(0.9).unwrap()[0];
    let mut best = (f64::INFINITY, f64::NAN);
    for i in 0..=12_000 {
        let c = -1.0 + i as f64 * 1e-3;
        let loss = pinball_loss(&data, &[c], 0.9);
        if loss < best.0 - 1e-12 {
            best = (loss, c);
        }
    }
    assert!((b - best.1).abs() < 1e-9, "{b} vs {}", best.1);
    assert!((b - 10.0).abs() < 1e-9);
}

/// Minimum loss over all fits through three data points (an optimal basic
/// solution of the LP interpolates p + 1 observations).
fn vertex_oracle(data: &SupervisedSet, tau: f64) -> f64 {
    let n = data.n_rows();
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let rows = [i, j, k];
                let a = nalgebra::Matrix3::from_fn(|r, c| if c == 0 { 1.0 } else { data.feature(rows[r], c - 1) });
                let y = nalgebra::Vector3::from_fn(|r, _| data.targets()[rows[r]]);
                if let Some(inv) = a.try_inverse() {
                    let b = inv * y;
                    best = best.min(pinball_loss(data, b.as_slice(), tau));
                }
            }
        }
    }
    best
}

#[test]
fn two_feature_fits_reach_vertex_oracle_loss() {
    let mut rng = substream(12, 0);
    for instance in 0..20 {
        let n = rng.random_range(8..=20);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![standard_normal(&mut rng), 3.0 * rng.random::<f64>()])
            .collect();
        let ys: Vec<f64> = rows
            .iter()
            .map(|r| 1.0 + 2.0 * r[0] - r[1] + standard_normal(&mut rng))
            .collect();
        let data = SupervisedSet::from_rows(&rows, ys).unwrap();
        for tau in [0.1, 0.5, 0.85] {
            let model = fit_qr(&data, &[lvl(tau)]).unwrap();
            let loss = pinball_loss(&data, model.coefficients(tau).unwrap(), tau);
            let oracle = vertex_oracle(&data, tau);
            assert!(loss <= oracle + 1e-6, "instance {instance}, tau {tau}: {loss} > {oracle}");
        }
    }
}

#[test]
fn median_residual_signs_balance() {
    let mut rng = substream(13, 0);
    let rows: Vec<Vec<f64>> = (0..101).map(|_| vec![standard_normal(&mut rng)]).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r[0] + standard_normal(&mut rng)).collect();
    let data = SupervisedSet::from_rows(&rows, ys.clone()).unwrap();
    let model = fit_qr(&data, &[lvl(0.5)]).unwrap();
    let (mut pos, mut neg) = (0i64, 0i64);
    for (x, y) in rows.iter().zip(&ys) {
        let r = y - model.predict(x, 0.5).unwrap();
        if r > 1e-9 {
            pos += 1;
        } else if r < -1e-9 {
            neg += 1;
        }
    }
    // Optimality at tau = 0.5 allows at most n / 2 residuals on either side.
    assert!((pos - neg).abs() <= 1, "{pos} above, {neg} below");

    let forest = fit_qrf(&data, &QrfConfig { seed: 3, ..QrfConfig::default() }).unwrap();
    let (mut pos, mut neg) = (0i64, 0i64);
    for (x, y) in rows.iter().zip(&ys) {
        let r = y - forest.predict(x, 0.5).unwrap();
        if r > 0.0 {
            pos += 1;
        } else if r < 0.0 {
            neg += 1;
        }
    }
    assert!((pos - neg).abs() <= 20, "{pos} above, {neg} below");
}

#[test]
fn forest_quantiles_are_monotone_in_level() {
    let mut rng = substream(14, 0);
    let rows: Vec<Vec<f64>> = (0..150)
        .map(|_| (0..3).map(|_| standard_normal(&mut rng)).collect())
        .collect();
    let ys: Vec<f64> = rows.iter().map(|r| r[0] * r[1] + standard_normal(&mut rng)).collect();
    let data = SupervisedSet::from_rows(&rows, ys).unwrap();
    let forest = fit_qrf(&data, &QrfConfig { n_trees: 40, seed: 9, ..QrfConfig::default() }).unwrap();
    let taus: Vec<f64> = (1..100).map(|k| k as f64 / 100.0).collect();
    for _ in 0..200 {
        let x: Vec<f64> = (0..3).map(|_| 2.0 * standard_normal(&mut rng)).collect();
        let q = forest.predict_many(&x, &taus).unwrap();
        assert!(q.windows(2).all(|w| w[0] <= w[1]), "{q:?}");
    }
}
