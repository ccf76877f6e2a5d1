//! Property-based invariants.

use cqe_core::conformal::{conformal_rank, score_quantile};
use cqe_core::evaluation::{
    calibration_mae, coverage_count, monotonize, pit_value, pit_values, pooled_calibration_mae, wilson_interval, Z95,
};
use cqe_core::gar::make_target;
use cqe_core::models::{fit_qr, pinball_loss};
use cqe_core::{QuantileLevel, SupervisedSet};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    -1e6..1e6f64
}

proptest! {
    #[test]
    fn score_quantile_is_monotone_in_level(
        scores in prop::collection::vec(finite(), 1..200),
        a in 0.001..0.999f64,
        b in 0.001..0.999f64,
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if let (Ok(ql), Ok(qh)) = (score_quantile(&scores, lo), score_quantile(&scores, hi)) {
            prop_assert!(ql <= qh);
        }
        // The rank never decreases with the level either.
        prop_assert!(conformal_rank(lo, scores.len()) <= conformal_rank(hi, scores.len()));
    }

    #[test]
    fn shifting_scores_shifts_the_quantile(
        scores in prop::collection::vec(-1e3..1e3f64, 1..100),
        level in 0.01..0.99f64,
        c in -1e3..1e3f64,
    ) {
        let shifted: Vec<f64> = scores.iter().map(|s| s + c).collect();
        if let Ok(q) = score_quantile(&scores, level) {
            let qs = score_quantile(&shifted, level).unwrap();
            prop_assert!((qs - (q + c)).abs() <= 1e-9 * (1.0 + q.abs() + c.abs()));
        }
    }

    #[test]
    fn coverage_is_a_count(
        pairs in prop::collection::vec((finite(), finite()), 1..100),
    ) {
        let (q, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let c = coverage_count(&q, &y).unwrap();
        prop_assert!(c <= y.len() as u64);
    }

    #[test]
    fn wilson_contains_the_point_estimate(n in 1u64..100_000, frac in 0.0..=1.0f64) {
        let s = ((n as f64) * frac).floor() as u64;
        let ci = wilson_interval(s, n, Z95).unwrap();
        let p = s as f64 / n as f64;
        prop_assert!(0.0 <= ci.lo && ci.lo <= p + 1e-12 && p <= ci.hi + 1e-12 && ci.hi <= 1.0);
    }

    #[test]
    fn mae_vanishes_on_calibrated_matrices(
        levels in prop::collection::btree_set(1u32..99, 1..10),
        noise in prop::collection::vec(-0.2..0.2f64, 30),
        iters in 1usize..3,
    ) {
        let levels: Vec<f64> = levels.into_iter().map(|l| l as f64 / 100.0).collect();
        let exact: Vec<Vec<f64>> = levels.iter().map(|&l| vec![l; iters]).collect();
        prop_assert_eq!(calibration_mae(&exact, &levels).unwrap(), 0.0);
        prop_assert_eq!(pooled_calibration_mae(&exact, &levels).unwrap(), 0.0);
        let noisy: Vec<Vec<f64>> = levels
            .iter()
            .enumerate()
            .map(|(i, &l)| (0..iters).map(|j| (l + noise[(i * 3 + j) % noise.len()]).clamp(0.0, 1.0)).collect())
            .collect();
        let mae = calibration_mae(&noisy, &levels).unwrap();
        prop_assert!(mae >= 0.0);
        prop_assert!(pooled_calibration_mae(&noisy, &levels).unwrap() <= mae + 1e-12);
    }

    #[test]
    fn monotonize_preserves_the_multiset(est in prop::collection::vec(finite(), 1..100)) {
        let m = monotonize(&est);
        prop_assert!(m.windows(2).all(|w| w[0] <= w[1]));
        let mut sorted = est.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assert_eq!(m, sorted);
    }

    #[test]
    fn pit_is_a_probability(
        est in prop::collection::vec(-1e3..1e3f64, 19),
        y in -1e4..1e4f64,
    ) {
        let levels: Vec<f64> = (1..20).map(|k| k as f64 / 20.0).collect();
        let p = pit_values(&levels, &est, y).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        // Below the grid the PIT never exceeds the lowest level.
        let sorted = monotonize(&est);
        if y < sorted[0] {
            prop_assert!(p <= levels[0]);
        }
    }

    #[test]
    fn pit_inverts_the_grid_at_distinct_nodes(
        mut est in prop::collection::btree_set(-1000i32..1000, 2..30),
    ) {
        let nodes: Vec<f64> = std::mem::take(&mut est).into_iter().map(f64::from).collect();
        let k = nodes.len();
        let grid: Vec<(f64, f64)> = nodes
            .iter()
            .enumerate()
            .map(|(i, &q)| ((i + 1) as f64 / (k + 1) as f64, q))
            .collect();
        for &(l, q) in &grid {
            prop_assert!((pit_value(&grid, q).unwrap() - l).abs() < 1e-12);
        }
    }

    #[test]
    fn targets_average_the_next_h_values(
        gdp in prop::collection::vec(-10.0..10.0f64, 2..40),
        h in 1usize..6,
    ) {
        match make_target(&gdp, h) {
            Ok(t) => {
                prop_assert_eq!(t.len(), gdp.len() - h);
                for (i, v) in t.iter().enumerate() {
                    let mean = gdp[i + 1..=i + h].iter().sum::<f64>() / h as f64;
                    prop_assert!((v - mean).abs() < 1e-12);
                }
            }
            Err(_) => prop_assert!(h >= gdp.len()),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn qr_fit_is_no_worse_than_perturbations(
        rows in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 6..30),
        tau in 0.05..0.95f64,
        delta in prop::collection::vec(-0.5..0.5f64, 3),
    ) {
        let xs: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.0]).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let data = SupervisedSet::from_rows(&xs, ys).unwrap();
        let Ok(model) = fit_qr(&data, &[QuantileLevel::new(tau).unwrap()]) else {
            // Constant feature column: rejected as collinear with the intercept.
            return Ok(());
        };
        let b = model.coefficients(tau).unwrap();
        let best = pinball_loss(&data, b, tau);
        let moved = [b[0] + delta[0], b[1] + delta[1]];
        prop_assert!(best <= pinball_loss(&data, &moved, tau) + 1e-9);
    }
}
