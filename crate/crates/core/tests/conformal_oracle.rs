//! Conformal score quantiles against a sort oracle, and Monte-Carlo checks of
//! the marginal guarantees on exchangeable data.

use std::sync::Arc;

use cqe_core::conformal::{
    calibrate_cqr, conformalize_lower, conformalize_upper, score_quantile, score_quantile_with, RankPolicy,
};
use cqe_core::models::{fit_qr, FittedQuantileModel};
use cqe_core::rng::{normal_quantile, standard_normal, student_t2_quantile, open_unit, substream, Rng64};
use cqe_core::{Error, QuantileLevel, SupervisedSet};
use rand::Rng;

fn lvl(t: f64) -> QuantileLevel {
    QuantileLevel::new(t).unwrap()
}

#[test]
fn score_quantile_matches_sort_oracle() {
    let mut rng = substream(21, 0);
    for m in 1..=500usize {
        let scores: Vec<f64> = (0..m).map(|_| standard_normal(&mut rng)).collect();
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        for k in 1..100usize {
            let level = k as f64 / 100.0;
            // ceil(k (m + 1) / 100) in integer arithmetic.
            let rank = (k * (m + 1)).div_ceil(100);
            match score_quantile(&scores, level) {
                Ok(q) => {
                    assert!(rank <= m, "m={m} level={level}: expected failure, got {q}");
                    assert_eq!(q, sorted[rank - 1], "m={m} level={level}");
                }
                Err(Error::InsufficientCalibration { rank: r, .. }) => {
                    assert!(rank > m, "m={m} level={level}");
                    assert_eq!(r, rank);
                }
                Err(e) => panic!("m={m} level={level}: {e}"),
            }
        }
    }
}

#[test]
fn clamped_rank_uses_largest_score() {
    let scores: Vec<f64> = (1..=19).map(f64::from).collect();
    assert_eq!(score_quantile_with(&scores, 0.99, RankPolicy::ClampToLargest).unwrap(), (19.0, true));
    assert_eq!(score_quantile_with(&scores, 0.5, RankPolicy::ClampToLargest).unwrap(), (10.0, false));
    assert!(score_quantile_with(&scores, 0.99, RankPolicy::Strict).is_err());
}

fn featureless(targets: Vec<f64>, levels: &[f64]) -> Arc<FittedQuantileModel> {
    let data = SupervisedSet::targets_only(targets).unwrap();
    let levels: Vec<QuantileLevel> = levels.iter().map(|&t| lvl(t)).collect();
    Arc::new(fit_qr(&data, &levels).unwrap().into())
}

#[test]
fn normal_lower_estimate_near_true_quantile() {
    let mut rng = substream(22, 0);
    let train: Vec<f64> = (0..1000).map(|_| standard_normal(&mut rng)).collect();
    let calib: Vec<f64> = (0..999).map(|_| standard_normal(&mut rng)).collect();
    let base = featureless(train, &[0.1]);
    let est = conformalize_lower(base, &SupervisedSet::targets_only(calib).unwrap(), lvl(0.1)).unwrap();
    let q = est.estimate(&[]).unwrap();
    assert!((q - normal_quantile(0.1)).abs() < 0.15, "{q}");
}

#[test]
fn upper_variant_mirrors_lower_under_sign_flip() {
    let mut rng = substream(23, 0);
    let train: Vec<f64> = (0..200).map(|_| standard_normal(&mut rng)).collect();
    let calib: Vec<f64> = (0..199).map(|_| standard_normal(&mut rng)).collect();
    let flip = |v: &[f64]| v.iter().map(|y| -y).collect::<Vec<_>>();
    for alpha in [0.05, 0.1, 0.25] {
        let lower = conformalize_lower(
            featureless(train.clone(), &[alpha]),
            &SupervisedSet::targets_only(calib.clone()).unwrap(),
            lvl(alpha),
        )
        .unwrap();
        let upper = conformalize_upper(
            featureless(flip(&train), &[1.0 - alpha]),
            &SupervisedSet::targets_only(flip(&calib)).unwrap(),
            lvl(alpha),
        )
        .unwrap();
        let (l, u) = (lower.estimate(&[]).unwrap(), upper.estimate(&[]).unwrap());
        assert!((l + u).abs() < 1e-9, "alpha={alpha}: {l} vs {u}");
    }
}

/// One regression draw `y = 1 + 2 x + t2` with `x ~ N(0, 1)`.
fn draw(rng: &mut Rng64, n: usize) -> SupervisedSet {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![standard_normal(rng)]).collect();
    let ys = rows
        .iter()
        .map(|r| 1.0 + 2.0 * r[0] + student_t2_quantile(open_unit(rng)))
        .collect();
    SupervisedSet::from_rows(&rows, ys).unwrap()
}

#[test]
fn lower_marginal_guarantee() {
    let (m, reps, n_test) = (99usize, 200, 100);
    let alpha = 0.1;
    let mut hits = 0u64;
    for rep in 0..reps {
        let mut rng = substream(24, rep);
        let train = draw(&mut rng, 100);
        let calib = draw(&mut rng, m);
        let test = draw(&mut rng, n_test);
        let base: Arc<FittedQuantileModel> = Arc::new(fit_qr(&train, &[lvl(alpha)]).unwrap().into());
        let est = conformalize_lower(base, &calib, lvl(alpha)).unwrap();
        for (x, y) in test.rows().zip(test.targets()) {
            hits += u64::from(*y <= est.estimate(x).unwrap());
        }
    }
    let total = (reps * n_test as u64) as f64;
    let freq = hits as f64 / total;
    let se = (alpha * (1.0 - alpha) / total).sqrt();
    assert!(freq <= alpha + 1.0 / (m as f64 + 1.0) + 3.0 * se, "{freq}");
    // Split conformal is not conservative by more than 1 / (m + 1) either.
    assert!(freq >= alpha - 1.0 / (m as f64 + 1.0) - 3.0 * se, "{freq}");
}

#[test]
fn cqr_interval_coverage() {
    let (m, reps, n_test) = (99usize, 200, 100);
    let alpha = 0.1;
    let mut inside = 0u64;
    for rep in 0..reps {
        let mut rng = substream(25, rep);
        let train = draw(&mut rng, 100);
        let calib = draw(&mut rng, m);
        let test = draw(&mut rng, n_test);
        let base: FittedQuantileModel = fit_qr(&train, &[lvl(alpha / 2.0), lvl(1.0 - alpha / 2.0)]).unwrap().into();
        let cal = calibrate_cqr(&base, &base, &calib, lvl(alpha)).unwrap();
        for (x, y) in test.rows().zip(test.targets()) {
            let iv = cal.interval(&base, &base, x).unwrap();
            inside += u64::from(iv.lo <= *y && *y <= iv.hi);
        }
    }
    let total = (reps * n_test as u64) as f64;
    let cov = inside as f64 / total;
    let se = (alpha * (1.0 - alpha) / total).sqrt();
    assert!(cov >= 1.0 - alpha - 3.0 * se, "{cov}");
    assert!(cov <= 1.0 - alpha + 1.0 / (m as f64 + 1.0) + 3.0 * se, "{cov}");
}

#[test]
fn random_calibration_sizes_never_panic() {
    let mut rng = substream(26, 0);
    for _ in 0..200 {
        let m = rng.random_range(1..50);
        let scores: Vec<f64> = (0..m).map(|_| standard_normal(&mut rng)).collect();
        let level: f64 = rng.random_range(0.001..0.999);
        match score_quantile(&scores, level) {
            Ok(q) => assert!(scores.contains(&q)),
            Err(Error::InsufficientCalibration { .. }) => {}
            Err(e) => panic!("{e}"),
        }
    }
}
