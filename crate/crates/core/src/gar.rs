//! Growth-at-Risk backtest: expanding-window quantile forecasts of future
//! GDP growth evaluated through the probability integral transform.
//!
//! At every forecast origin `t` only information dated `<= t` is used: the
//! training pairs are those whose target window `t'+1..t'+h` has closed by
//! `t`, and the principal components of the financial series are re-fitted
//! on rows `0..=t`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::conformal::{conformalize_lower_levels, make_split, RankPolicy, SplitScheme};
use crate::data::{fine_grid, reporting_levels, validate_levels, QuantileLevel, SupervisedSet};
use crate::error::{Error, Result};
use crate::evaluation::{curve_mae, ks_uniform_statistic, pit_calibration_curve, pit_values};
use crate::experiments::ModelKind;
use crate::models::{fit_qr, fit_qrf, FittedQuantileModel, QrfConfig};
use crate::rng::derive_seed;

/// A calendar quarter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Quarter {
    pub year: i32,
    /// 1..=4
    pub quarter: u8,
}

impl Quarter {
    pub fn new(year: i32, quarter: u8) -> Result<Self> {
        if !(1..=4).contains(&quarter) {
            return Err(Error::InvalidParameter {
                name: "quarter",
                reason: format!("{quarter} is not in 1..=4"),
            });
        }
        Ok(Self { year, quarter })
    }

    /// Accepts `YYYY-MM-DD`, `YYYY-MM` and `YYYYQn` / `YYYY-Qn`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidParameter {
            name: "date",
            reason: format!("unrecognised quarterly date {s:?}"),
        };
        if s.len() < 6 {
            return Err(bad());
        }
        let year: i32 = s[..4].parse().map_err(|_| bad())?;
        let rest = s[4..].trim_start_matches('-');
        if let Some(q) = rest.strip_prefix(['Q', 'q']) {
            let q: u8 = q.parse().map_err(|_| bad())?;
            return Self::new(year, q).map_err(|_| bad());
        }
        let month: u8 = rest.split('-').next().unwrap_or("").parse().map_err(|_| bad())?;
        if !(1..=12).contains(&month) {
            return Err(bad());
        }
        Ok(Self {
            year,
            quarter: (month - 1) / 3 + 1,
        })
    }

    /// Quarters since year 0.
    pub fn ordinal(self) -> i64 {
        i64::from(self.year) * 4 + i64::from(self.quarter) - 1
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.quarter)
    }
}

/// Row-major `n x k` block of financial component series.
#[derive(Debug, Clone, PartialEq)]
pub struct Components {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl Components {
    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let k = self.n_cols();
        &self.values[i * k..(i + 1) * k]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroDataset {
    dates: Vec<Quarter>,
    gdp: Vec<f64>,
    nfci: Option<Vec<f64>>,
    components: Option<Components>,
}

impl MacroDataset {
    pub fn new(
        dates: Vec<Quarter>,
        gdp: Vec<f64>,
        nfci: Option<Vec<f64>>,
        components: Option<Components>,
    ) -> Result<Self> {
        if dates.is_empty() {
            return Err(Error::EmptyData);
        }
        if dates.len() != gdp.len() {
            return Err(Error::LengthMismatch {
                left: dates.len(),
                right: gdp.len(),
            });
        }
        if let Some(v) = &nfci {
            if v.len() != gdp.len() {
                return Err(Error::LengthMismatch {
                    left: gdp.len(),
                    right: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("nfci"));
            }
        }
        if let Some(c) = &components {
            if c.values.len() != gdp.len() * c.n_cols() {
                return Err(Error::DimensionMismatch {
                    expected: gdp.len() * c.n_cols(),
                    got: c.values.len(),
                });
            }
            if c.values.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("components"));
            }
        }
        if gdp.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("gdp"));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter {
                name: "dates",
                reason: "dates must be strictly increasing".into(),
            });
        }
        Ok(Self {
            dates,
            gdp,
            nfci,
            components,
        })
    }

    pub fn len(&self) -> usize {
        self.gdp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gdp.is_empty()
    }

    pub fn dates(&self) -> &[Quarter] {
        &self.dates
    }

    pub fn gdp(&self) -> &[f64] {
        &self.gdp
    }

    pub fn nfci(&self) -> Option<&[f64]> {
        self.nfci.as_deref()
    }

    pub fn components(&self) -> Option<&Components> {
        self.components.as_ref()
    }

    /// Positions where consecutive quarters are not adjacent.
    pub fn gaps(&self) -> Vec<usize> {
        self.dates
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1].ordinal() - w[0].ordinal() != 1)
            .map(|(i, _)| i + 1)
            .collect()
    }

    /// The first `n` rows.
    pub fn truncate(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            dates: self.dates[..n].to_vec(),
            gdp: self.gdp[..n].to_vec(),
            nfci: self.nfci.as_ref().map(|v| v[..n].to_vec()),
            components: self.components.as_ref().map(|c| Components {
                names: c.names.clone(),
                values: c.values[..n * c.n_cols()].to_vec(),
            }),
        }
    }
}

/// Average growth over the next `h` quarters: `target[t] = mean(gdp[t+1..=t+h])`.
/// The result has `len - h` entries.
pub fn make_target(gdp: &[f64], h: usize) -> Result<Vec<f64>> {
    if h == 0 {
        return Err(Error::InvalidParameter {
            name: "horizon",
            reason: "must be at least 1".into(),
        });
    }
    if gdp.len() <= h {
        return Err(Error::TooShort {
            needed: h + 1,
            got: gdp.len(),
        });
    }
    Ok((0..gdp.len() - h)
        .map(|t| gdp[t + 1..=t + h].iter().sum::<f64>() / h as f64)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    /// Indices of the input columns that had non-zero variance.
    pub kept_columns: Vec<usize>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    /// `kept x r`, column-major by component.
    pub loadings: DMatrix<f64>,
    /// Explained-variance ratio of each retained component.
    pub explained_ratio: Vec<f64>,
}

impl PcaProjection {
    pub fn n_components(&self) -> usize {
        self.loadings.ncols()
    }

    /// Component scores of one full-width input row.
    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = self
            .kept_columns
            .iter()
            .enumerate()
            .map(|(j, &c)| (row[c] - self.means[j]) / self.scales[j])
            .collect();
        (0..self.n_components())
            .map(|r| z.iter().enumerate().map(|(j, v)| v * self.loadings[(j, r)]).sum())
            .collect()
    }
}

/// Principal components of the standardised columns of a row-major
/// `n x k` matrix, keeping the fewest components whose cumulative explained
/// variance reaches `threshold`.
pub fn fit_pca(values: &[f64], n_rows: usize, n_cols: usize, threshold: f64) -> Result<PcaProjection> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "pca_variance",
            reason: format!("{threshold} is not in (0, 1]"),
        });
    }
    if values.len() != n_rows * n_cols {
        return Err(Error::DimensionMismatch {
            expected: n_rows * n_cols,
            got: values.len(),
        });
    }
    if n_rows < 2 || n_cols == 0 {
        return Err(Error::DegenerateMatrix("need at least two rows and one column"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("components"));
    }
    let n = n_rows as f64;
    let mut kept = Vec::new();
    let mut means = Vec::new();
    let mut scales = Vec::new();
    for j in 0..n_cols {
        let col = (0..n_rows).map(|i| values[i * n_cols + j]);
        let mean = col.clone().sum::<f64>() / n;
        let var = col.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        let sd = libm::sqrt(var);
        if sd > 1e-12 * mean.abs().max(1.0) {
            kept.push(j);
            means.push(mean);
            scales.push(sd);
        }
    }
    if kept.is_empty() {
        return Err(Error::DegenerateMatrix("every column has zero variance"));
    }
    let k = kept.len();
    let z = DMatrix::from_fn(n_rows, k, |i, j| (values[i * n_cols + kept[j]] - means[j]) / scales[j]);
    let corr = (z.transpose() * &z) / (n - 1.0);
    let eig = SymmetricEigen::new(corr);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let lambdas: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = lambdas.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateMatrix("zero total variance"));
    }
    let mut cum = 0.0;
    let mut r = k;
    for (i, l) in lambdas.iter().enumerate() {
        cum += l / total;
        if cum >= threshold - 1e-10 {
            r = i + 1;
            break;
        }
    }
    let mut loadings = DMatrix::zeros(k, r);
    for (c, &src) in order.iter().take(r).enumerate() {
        let v = eig.eigenvectors.column(src);
        // Fix the sign so the largest-magnitude entry is positive.
        let pivot = (0..k)
            .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a)))
            .unwrap_or(0);
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..k {
            loadings[(j, c)] = sign * v[j];
        }
    }
    Ok(PcaProjection {
        kept_columns: kept,
        means,
        scales,
        loadings,
        explained_ratio: lambdas[..r].iter().map(|l| l / total).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PredictorMode {
    LagOnly,
    NfciPlusLag,
    ComponentsPcaPlusLag,
}

impl PredictorMode {
    pub fn key(self) -> &'static str {
        match self {
            PredictorMode::LagOnly => "lag_only",
            PredictorMode::NfciPlusLag => "nfci_plus_lag",
            PredictorMode::ComponentsPcaPlusLag => "components_pca_plus_lag",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "lag_only" => Some(PredictorMode::LagOnly),
            "nfci_plus_lag" => Some(PredictorMode::NfciPlusLag),
            "components_pca_plus_lag" => Some(PredictorMode::ComponentsPcaPlusLag),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestConfig {
    pub horizon: usize,
    pub mode: PredictorMode,
    pub pca_variance: f64,
    pub quantile_grid: Vec<f64>,
    /// Reporting levels of the PIT calibration curve.
    pub curve_levels: Vec<f64>,
    /// First forecast origin (row index).
    pub min_train: usize,
    pub models: Vec<ModelKind>,
    pub qrf: QrfConfig,
    pub seed: u64,
}

impl BacktestConfig {
    pub fn new(horizon: usize, mode: PredictorMode) -> Self {
        Self {
            horizon,
            mode,
            pca_variance: 0.9,
            quantile_grid: fine_grid(),
            curve_levels: reporting_levels(),
            min_train: 40,
            models: ModelKind::ALL.to_vec(),
            qrf: QrfConfig::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidParameter {
                name: "horizon",
                reason: "must be at least 1".into(),
            });
        }
        if !(self.pca_variance > 0.0 && self.pca_variance <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "pca_variance",
                reason: format!("{} is not in (0, 1]", self.pca_variance),
            });
        }
        validate_levels(&self.quantile_grid)?;
        validate_levels(&self.curve_levels)?;
        if self.min_train < self.horizon + 4 {
            return Err(Error::InvalidParameter {
                name: "min_train",
                reason: format!("must be at least horizon + 4 = {}", self.horizon + 4),
            });
        }
        if self.models.is_empty() {
            return Err(Error::InvalidParameter {
                name: "models",
                reason: "at least one model is required".into(),
            });
        }
        Ok(())
    }

    fn check_dataset(&self, ds: &MacroDataset) -> Result<()> {
        match self.mode {
            PredictorMode::NfciPlusLag if ds.nfci().is_none() => Err(Error::InvalidParameter {
                name: "nfci",
                reason: "nfci_plus_lag mode needs an nfci column".into(),
            }),
            PredictorMode::ComponentsPcaPlusLag
                if ds.components().map_or(true, |c| c.n_cols() == 0) =>
            {
                Err(Error::InvalidParameter {
                    name: "components",
                    reason: "components_pca_plus_lag mode needs component columns".into(),
                })
            }
            _ => Ok(()),
        }
    }
}

/// Feature rows `0..=origin` built from information available at `origin`.
fn features_at(ds: &MacroDataset, cfg: &BacktestConfig, origin: usize) -> Result<(Vec<Vec<f64>>, usize)> {
    let rows = origin + 1;
    let gdp = ds.gdp();
    let mut out: Vec<Vec<f64>> = (0..rows).map(|_| Vec::new()).collect();
    let mut n_pcs = 0;
    match cfg.mode {
        PredictorMode::LagOnly => {}
        PredictorMode::NfciPlusLag => {
            let nfci = ds.nfci().ok_or(Error::EmptyInput)?;
            for (i, row) in out.iter_mut().enumerate() {
                row.push(nfci[i]);
            }
        }
        PredictorMode::ComponentsPcaPlusLag => {
            let c = ds.components().ok_or(Error::EmptyInput)?;
            let k = c.n_cols();
            let pca = fit_pca(&c.values[..rows * k], rows, k, cfg.pca_variance)?;
            n_pcs = pca.n_components();
            for (i, row) in out.iter_mut().enumerate() {
                row.extend(pca.transform(c.row(i)));
            }
        }
    }
    for (i, row) in out.iter_mut().enumerate() {
        row.push(gdp[i]);
    }
    Ok((out, n_pcs))
}

/// Quantile forecasts issued at one origin: training set and test row.
#[derive(Debug, Clone, PartialEq)]
pub struct OriginProblem {
    pub origin: usize,
    pub train: SupervisedSet,
    pub x: Vec<f64>,
    pub n_components: usize,
}

/// Training pairs `s` with `s + h <= origin` and the feature row at `origin`.
pub fn origin_problem(ds: &MacroDataset, cfg: &BacktestConfig, origin: usize) -> Result<OriginProblem> {
    let h = cfg.horizon;
    if origin >= ds.len() || origin < h {
        return Err(Error::TooShort {
            needed: h + 1,
            got: origin,
        });
    }
    let (features, n_pcs) = features_at(ds, cfg, origin)?;
    let targets = make_target(&ds.gdp()[..=origin], h)?;
    let train_rows: Vec<Vec<f64>> = features[..targets.len()].to_vec();
    let train = SupervisedSet::from_rows(&train_rows, targets)?;
    Ok(OriginProblem {
        origin,
        train,
        x: features[origin].clone(),
        n_components: n_pcs,
    })
}

/// Grid estimates of one model plus the number of conformal levels whose
/// rank had to be clamped (windows too short for the extreme levels).
fn forecast_model(
    kind: ModelKind,
    problem: &OriginProblem,
    grid: &[QuantileLevel],
    qrf: &QrfConfig,
) -> Result<Forecast> {
    let taus: Vec<f64> = grid.iter().map(|l| l.value()).collect();
    let check_converged = |m: &crate::models::LinearQuantileModel| -> Result<()> {
        match m.fits().iter().find(|f| !f.converged) {
            Some(f) => Err(Error::NonConvergence {
                iterations: f.iterations,
            }),
            None => Ok(()),
        }
    };
    match kind {
        ModelKind::Qr => {
            let m = fit_qr(&problem.train, grid)?;
            check_converged(&m)?;
            let estimates = taus.iter().map(|&t| m.predict(&problem.x, t)).collect::<Result<_>>()?;
            Ok(Forecast {
                estimates,
                clamped_levels: 0,
            })
        }
        ModelKind::Qrf => Ok(Forecast {
            estimates: fit_qrf(&problem.train, qrf)?.predict_many(&problem.x, &taus)?,
            clamped_levels: 0,
        }),
        ModelKind::CqrQr | ModelKind::CqrQrf => {
            let split = make_split(problem.train.n_rows(), SplitScheme::ChronologicalHalf)?;
            let (proper, calib) = split.apply(&problem.train);
            let base: FittedQuantileModel = if kind == ModelKind::CqrQr {
                let m = fit_qr(&proper, grid)?;
                check_converged(&m)?;
                m.into()
            } else {
                fit_qrf(&proper, qrf)?.into()
            };
            let mut clamped_levels = 0;
            let estimates = conformalize_lower_levels(Arc::new(base), &calib, grid, RankPolicy::ClampToLargest)
                .into_iter()
                .map(|e| {
                    let e = e?;
                    clamped_levels += usize::from(e.clamped());
                    e.estimate(&problem.x)
                })
                .collect::<Result<_>>()?;
            Ok(Forecast {
                estimates,
                clamped_levels,
            })
        }
    }
}

/// Quantile-grid forecast of one model at one origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    /// One estimate per grid level (possibly crossing).
    pub estimates: Vec<f64>,
    /// Conformal levels whose calibration rank exceeded the window and was
    /// clamped to the largest score.
    pub clamped_levels: usize,
}

/// Quantile-grid forecasts of every configured model at `origin`, using only
/// rows `0..=origin` of the dataset.
pub fn forecast_at(
    ds: &MacroDataset,
    cfg: &BacktestConfig,
    origin: usize,
) -> Result<BTreeMap<ModelKind, Result<Forecast>>> {
    cfg.validate()?;
    cfg.check_dataset(ds)?;
    let grid: Vec<QuantileLevel> = cfg
        .quantile_grid
        .iter()
        .map(|&l| QuantileLevel::new(l))
        .collect::<Result<_>>()?;
    let problem = origin_problem(ds, cfg, origin);
    let mut out = BTreeMap::new();
    for (idx, &kind) in cfg.models.iter().enumerate() {
        let qrf = QrfConfig {
            seed: derive_seed(derive_seed(cfg.seed, origin as u64), idx as u64),
            ..cfg.qrf
        };
        let res = problem
            .as_ref()
            .map_err(Clone::clone)
            .and_then(|p| forecast_model(kind, p, &grid, &qrf));
        out.insert(kind, res);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OriginRecord {
    pub origin: usize,
    pub date: Quarter,
    /// Date at which the target is fully realised.
    pub target_date: Quarter,
    pub realized: f64,
    /// `Err` when the forecast failed at this origin.
    pub pit: core::result::Result<f64, Error>,
    pub clamped_levels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBacktest {
    pub model: ModelKind,
    pub records: Vec<OriginRecord>,
    /// (level, share of PIT values `<= level`) at the reporting levels.
    pub curve: Vec<(f64, f64)>,
    pub mae: f64,
    pub ks: f64,
    pub failed_origins: usize,
    /// Origins at which at least one conformal level was clamped.
    pub clamped_origins: usize,
}

impl ModelBacktest {
    pub fn pits(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.pit.as_ref().ok().copied()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestResult {
    pub horizon: usize,
    pub mode: PredictorMode,
    pub models: Vec<ModelBacktest>,
}

impl BacktestResult {
    pub fn model(&self, kind: ModelKind) -> Option<&ModelBacktest> {
        self.models.iter().find(|m| m.model == kind)
    }
}

/// Expanding-window backtest from `min_train` to the last origin with a
/// realised target.
pub fn run_backtest(ds: &MacroDataset, cfg: &BacktestConfig) -> Result<BacktestResult> {
    cfg.validate()?;
    cfg.check_dataset(ds)?;
    let h = cfg.horizon;
    let targets = make_target(ds.gdp(), h)?;
    if cfg.min_train >= targets.len() {
        return Err(Error::TooShort {
            needed: cfg.min_train + h + 1,
            got: ds.len(),
        });
    }
    let mut records: BTreeMap<ModelKind, Vec<OriginRecord>> =
        cfg.models.iter().map(|&m| (m, Vec::new())).collect();
    for origin in cfg.min_train..targets.len() {
        let forecasts = forecast_at(ds, cfg, origin)?;
        let realized = targets[origin];
        for (kind, res) in forecasts {
            let clamped_levels = res.as_ref().map_or(0, |f| f.clamped_levels);
            let pit = res.and_then(|f| pit_values(&cfg.quantile_grid, &f.estimates, realized));
            records.get_mut(&kind).expect("configured model").push(OriginRecord {
                origin,
                date: ds.dates()[origin],
                target_date: ds.dates()[origin + h],
                realized,
                pit,
                clamped_levels,
            });
        }
    }
    let models = cfg
        .models
        .iter()
        .map(|&kind| {
            let records = records.remove(&kind).unwrap_or_default();
            let pits: Vec<f64> = records.iter().filter_map(|r| r.pit.as_ref().ok().copied()).collect();
            let failed_origins = records.len() - pits.len();
            let clamped_origins = records.iter().filter(|r| r.clamped_levels > 0).count();
            let (curve, mae, ks) = if pits.is_empty() {
                (Vec::new(), f64::NAN, f64::NAN)
            } else {
                let curve = pit_calibration_curve(&pits, &cfg.curve_levels);
                let mae = curve_mae(&curve);
                (curve, mae, ks_uniform_statistic(&pits))
            };
            ModelBacktest {
                model: kind,
                records,
                curve,
                mae,
                ks,
                failed_origins,
                clamped_origins,
            }
        })
        .collect();
    Ok(BacktestResult {
        horizon: h,
        mode: cfg.mode,
        models,
    })
}
