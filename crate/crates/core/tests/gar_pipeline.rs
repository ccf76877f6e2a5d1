//! Backtest pipeline: PCA against a reference eigendecomposition, strict
//! no-look-ahead replay, determinism and PIT self-consistency.

use cqe_core::experiments::ModelKind;
use cqe_core::gar::{
    fit_pca, forecast_at, make_target, run_backtest, BacktestConfig, Components, MacroDataset, PredictorMode,
    Quarter,
};
use cqe_core::models::QrfConfig;
use cqe_core::rng::{standard_normal, substream};
use cqe_core::Error;
use nalgebra::{DMatrix, SymmetricEigen};

fn quarters(n: usize) -> Vec<Quarter> {
    (0..n)
        .map(|i| Quarter::new(1950 + (i / 4) as i32, (i % 4) as u8 + 1).unwrap())
        .collect()
}

/// `gdp_{t+1} = 0.5 gdp_t + 0.8 nfci_t + e`, `nfci` an AR(1), plus five
/// noisy copies of `nfci` as components.
fn synthetic(n: usize, seed: u64) -> MacroDataset {
    let mut rng = substream(seed, 0);
    let mut nfci = vec![0.0; n];
    let mut gdp = vec![0.0; n];
    for t in 1..n {
        nfci[t] = 0.7 * nfci[t - 1] + standard_normal(&mut rng);
        gdp[t] = 0.5 * gdp[t - 1] + 0.8 * nfci[t - 1] + standard_normal(&mut rng);
    }
    let k = 5;
    let mut values = Vec::with_capacity(n * k);
    for v in &nfci {
        for j in 0..k {
            values.push((j as f64 + 1.0) * v + 0.3 * standard_normal(&mut rng));
        }
    }
    let components = Components {
        names: (0..k).map(|j| format!("c{j}")).collect(),
        values,
    };
    MacroDataset::new(quarters(n), gdp, Some(nfci), Some(components)).unwrap()
}

fn small_config(h: usize, mode: PredictorMode) -> BacktestConfig {
    BacktestConfig {
        qrf: QrfConfig {
            n_trees: 20,
            ..QrfConfig::default()
        },
        seed: 5,
        ..BacktestConfig::new(h, mode)
    }
}

#[test]
fn pca_on_identity_covariance_keeps_all_components() {
    let (n, k) = (2_000, 3);
    let mut rng = substream(51, 0);
    let values: Vec<f64> = (0..n * k).map(|_| standard_normal(&mut rng)).collect();
    let pca = fit_pca(&values, n, k, 0.9).unwrap();
    assert_eq!(pca.n_components(), 3);

    // Reference: eigenvalues of the sample correlation matrix.
    let m = DMatrix::from_row_slice(n, k, &values);
    let means = m.row_mean();
    let centred = DMatrix::from_fn(n, k, |i, j| m[(i, j)] - means[j]);
    let cov = centred.transpose() * &centred / (n as f64 - 1.0);
    let d = DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 / cov[(i, i)].sqrt() } else { 0.0 });
    let corr = &d * cov * &d;
    let mut reference: Vec<f64> = SymmetricEigen::new(corr).eigenvalues.iter().copied().collect();
    reference.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = reference.iter().sum();
    for (got, want) in pca.explained_ratio.iter().zip(&reference) {
        assert!((got - want / total).abs() < 1e-10, "{got} vs {}", want / total);
    }
}

#[test]
fn pca_threshold_one_keeps_matrix_rank() {
    // Columns 0, 1 independent; column 2 = column 0 + column 1: rank 2.
    let n = 50;
    let mut rng = substream(52, 0);
    let values: Vec<f64> = (0..n)
        .flat_map(|_| {
            let (a, b) = (standard_normal(&mut rng), standard_normal(&mut rng));
            [a, b, a + b]
        })
        .collect();
    let pca = fit_pca(&values, n, 3, 1.0).unwrap();
    assert_eq!(pca.n_components(), 2);
}

#[test]
fn pca_scores_are_uncorrelated_and_reconstruct_variance() {
    let ds = synthetic(120, 53);
    let c = ds.components().unwrap();
    let pca = fit_pca(&c.values, ds.len(), c.n_cols(), 0.999).unwrap();
    let scores: Vec<Vec<f64>> = (0..ds.len()).map(|i| pca.transform(c.row(i))).collect();
    let r = pca.n_components();
    for a in 0..r {
        for b in 0..a {
            let cov: f64 = scores.iter().map(|s| s[a] * s[b]).sum::<f64>() / (ds.len() - 1) as f64;
            assert!(cov.abs() < 1e-8, "components {a}, {b}: {cov}");
        }
    }
}

#[test]
fn horizon_equal_to_length_is_too_short() {
    assert!(matches!(make_target(&[1.0, 2.0, 3.0], 3), Err(Error::TooShort { .. })));
    assert_eq!(make_target(&[4.0, 0.0, 4.0, 0.0, 4.0], 4).unwrap(), vec![2.0]);
}

#[test]
fn forecasts_do_not_look_ahead() {
    let ds = synthetic(90, 54);
    for mode in [PredictorMode::LagOnly, PredictorMode::NfciPlusLag, PredictorMode::ComponentsPcaPlusLag] {
        for h in [1, 4] {
            let cfg = small_config(h, mode);
            for origin in [40, 57, 85] {
                let full = forecast_at(&ds, &cfg, origin).unwrap();
                let truncated = forecast_at(&ds.truncate(origin + 1), &cfg, origin).unwrap();
                assert_eq!(full, truncated, "{mode:?} h={h} origin={origin}");
                // A perturbed future must not matter either.
                let mut gdp = ds.gdp().to_vec();
                for v in &mut gdp[origin + 1..] {
                    *v += 100.0;
                }
                let altered = MacroDataset::new(
                    ds.dates().to_vec(),
                    gdp,
                    ds.nfci().map(<[f64]>::to_vec),
                    ds.components().cloned(),
                )
                .unwrap();
                assert_eq!(full, forecast_at(&altered, &cfg, origin).unwrap());
            }
        }
    }
}

#[test]
fn backtest_is_deterministic() {
    let ds = synthetic(70, 55);
    let cfg = small_config(1, PredictorMode::ComponentsPcaPlusLag);
    let a = run_backtest(&ds, &cfg).unwrap();
    let b = run_backtest(&ds, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.models.len(), 4);
    for m in &a.models {
        assert_eq!(m.records.len(), 70 - 1 - 40);
        assert_eq!(m.failed_origins, 0, "{:?}", m.model);
    }
}

#[test]
fn correctly_specified_qr_has_calibrated_pits() {
    // A 19-level grid keeps the 1000 expanding-window refits cheap; the
    // Gaussian PIT interpolation error on it is far below the tolerance.
    let ds = synthetic(1201, 56);
    let cfg = BacktestConfig {
        models: vec![ModelKind::Qr],
        min_train: 200,
        quantile_grid: (1..20).map(|k| k as f64 / 20.0).collect(),
        ..BacktestConfig::new(1, PredictorMode::NfciPlusLag)
    };
    let r = run_backtest(&ds, &cfg).unwrap();
    let m = r.model(ModelKind::Qr).unwrap();
    let sup = m.curve.iter().map(|(l, c)| (c - l).abs()).fold(0.0, f64::max);
    assert!(sup < 0.05, "sup-norm {sup}, curve {:?}", m.curve);
}
