//! Simulation studies: generate, split, fit, conformalise, evaluate.
//!
//! One iteration simulates `n_lags + n_train + n_test` observations, trains
//! on the first `n_train` supervised rows and scores one-step-ahead quantile
//! estimates at the last `n_test` rows, whose features are the realised
//! lags. Plain QR/QRF train on all `n_train` rows; the conformal variants
//! train on the first half and calibrate on the second.
//!
//! [`run_iteration`] is the parallel unit; [`aggregate`] is an
//! order-independent reduction of iteration outcomes.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::conformal::{conformalize_lower_levels, make_split, RankPolicy, SplitScheme};
use crate::data::{validate_levels, QuantileLevel, SupervisedSet};
use crate::dgp::{build_supervised, simulate, DgpKind, DgpSpec, Noise};
use crate::error::{Error, Result};
use crate::evaluation::{
    calibration_mae_summary, classify_levels, coverage_count, pooled_calibration_mae,
    CalibrationReport, CoverageRecord, PooledCell, Z95,
};
use crate::models::{fit_qr, fit_qrf, FittedQuantileModel, QrfConfig};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelKind {
    Qr,
    Qrf,
    CqrQr,
    CqrQrf,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Qr, ModelKind::Qrf, ModelKind::CqrQr, ModelKind::CqrQrf];

    /// Display label, as in the result tables.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Qr => "QR",
            ModelKind::Qrf => "QRF",
            ModelKind::CqrQr => "CQR QR",
            ModelKind::CqrQrf => "CQR QRF",
        }
    }

    /// Identifier used in file names and config files.
    pub fn key(self) -> &'static str {
        match self {
            ModelKind::Qr => "qr",
            ModelKind::Qrf => "qrf",
            ModelKind::CqrQr => "cqr_qr",
            ModelKind::CqrQrf => "cqr_qrf",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let norm: String = s
            .chars()
            .filter(|c| !matches!(c, ' ' | '_' | '-'))
            .flat_map(char::to_lowercase)
            .collect();
        match norm.as_str() {
            "qr" => Some(ModelKind::Qr),
            "qrf" => Some(ModelKind::Qrf),
            "cqrqr" => Some(ModelKind::CqrQr),
            "cqrqrf" => Some(ModelKind::CqrQrf),
            _ => None,
        }
    }

    pub fn is_conformal(self) -> bool {
        matches!(self, ModelKind::CqrQr | ModelKind::CqrQrf)
    }
}

/// How Wilson classification cells are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WilsonPooling {
    /// One cell per level, pooling all iterations and test points.
    #[default]
    Pooled,
    /// One cell per (level, iteration) with `n = n_test`.
    PerIteration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Process template; its seed is replaced per iteration.
    pub dgp: DgpSpec,
    pub n_train: usize,
    pub n_test: usize,
    pub iterations: usize,
    pub levels: Vec<f64>,
    pub models: Vec<ModelKind>,
    pub n_lags: usize,
    pub qrf: QrfConfig,
    pub master_seed: u64,
    pub wilson: WilsonPooling,
}

impl ExperimentConfig {
    /// Defaults of the simulation protocol for a given process and size.
    pub fn new(dgp: DgpSpec, n_train: usize) -> Self {
        let n_lags = match dgp.kind {
            DgpKind::Ar1Root => 1,
            _ => 2,
        };
        Self {
            dgp,
            n_train,
            n_test: 100,
            iterations: 100,
            levels: crate::data::reporting_levels(),
            models: ModelKind::ALL.to_vec(),
            n_lags,
            qrf: QrfConfig::default(),
            master_seed: 0,
            wilson: WilsonPooling::Pooled,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_levels(&self.levels)?;
        self.dgp.validate()?;
        if self.n_train <= 2 * (self.n_lags + 1) {
            return Err(Error::InvalidParameter {
                name: "n_train",
                reason: format!("must exceed 2 (n_lags + 1) = {}", 2 * (self.n_lags + 1)),
            });
        }
        if self.n_test == 0 {
            return Err(Error::InvalidParameter {
                name: "n_test",
                reason: "must be positive".into(),
            });
        }
        if self.iterations == 0 {
            return Err(Error::InvalidParameter {
                name: "iterations",
                reason: "must be positive".into(),
            });
        }
        if self.models.is_empty() {
            return Err(Error::InvalidParameter {
                name: "models",
                reason: "at least one model is required".into(),
            });
        }
        let mut seen = self.models.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.models.len() {
            return Err(Error::InvalidParameter {
                name: "models",
                reason: "duplicate model".into(),
            });
        }
        Ok(())
    }

    /// Stable 64-bit fingerprint of the configuration (FNV-1a of its debug
    /// rendering).
    pub fn fingerprint(&self) -> u64 {
        fnv1a(format!("{self:?}").as_bytes())
    }

    /// DGP seed of iteration `i`.
    pub fn iteration_seed(&self, iteration: usize) -> u64 {
        derive_seed(self.master_seed, iteration as u64)
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Coverage count at one level of one iteration, or the error that stopped it.
pub type Cell = core::result::Result<u64, Error>;

#[derive(Debug, Clone, PartialEq)]
pub struct IterationOutcome {
    pub iteration: usize,
    pub n_test: usize,
    /// Per model, one cell per configured level.
    pub cells: BTreeMap<ModelKind, Vec<Cell>>,
    /// Set when the simulated series tripped the overflow guard.
    pub overflow: bool,
}

impl IterationOutcome {
    /// Coverage map `model -> level -> coverage` (NaN for errored cells).
    pub fn coverages(&self, levels: &[f64]) -> BTreeMap<ModelKind, Vec<(f64, f64)>> {
        self.cells
            .iter()
            .map(|(&m, cells)| {
                let v = levels
                    .iter()
                    .zip(cells)
                    .map(|(&l, c)| {
                        let cov = match c {
                            Ok(k) => *k as f64 / self.n_test as f64,
                            Err(_) => f64::NAN,
                        };
                        (l, cov)
                    })
                    .collect();
                (m, v)
            })
            .collect()
    }
}

fn count_cells(
    estimates: impl Fn(usize, &[f64]) -> Result<f64>,
    test: &SupervisedSet,
    level_index: usize,
) -> Cell {
    let est: Result<Vec<f64>> = test.rows().map(|x| estimates(level_index, x)).collect();
    coverage_count(&est?, test.targets())
}

fn failed(levels: usize, e: &Error) -> Vec<Cell> {
    vec![Err(e.clone()); levels]
}

fn qr_cells(train: &SupervisedSet, test: &SupervisedSet, levels: &[QuantileLevel]) -> Vec<Cell> {
    let model = match fit_qr(train, levels) {
        Ok(m) => m,
        Err(e) => return failed(levels.len(), &e),
    };
    levels
        .iter()
        .enumerate()
        .map(|(li, l)| {
            let fit = model.level_fit(l.value()).ok_or(Error::LevelNotFitted(l.value()))?;
            if !fit.converged {
                return Err(Error::NonConvergence {
                    iterations: fit.iterations,
                });
            }
            count_cells(|_, x| model.predict(x, l.value()), test, li)
        })
        .collect()
}

fn qrf_cells(
    train: &SupervisedSet,
    test: &SupervisedSet,
    levels: &[QuantileLevel],
    qrf: &QrfConfig,
) -> Vec<Cell> {
    let forest = match fit_qrf(train, qrf) {
        Ok(f) => f,
        Err(e) => return failed(levels.len(), &e),
    };
    let taus: Vec<f64> = levels.iter().map(|l| l.value()).collect();
    let preds: Result<Vec<Vec<f64>>> = test.rows().map(|x| forest.predict_many(x, &taus)).collect();
    let preds = match preds {
        Ok(p) => p,
        Err(e) => return failed(levels.len(), &e),
    };
    (0..levels.len())
        .map(|li| {
            let est: Vec<f64> = preds.iter().map(|row| row[li]).collect();
            coverage_count(&est, test.targets())
        })
        .collect()
}

fn conformal_cells(
    base: core::result::Result<FittedQuantileModel, Error>,
    calib: &SupervisedSet,
    test: &SupervisedSet,
    levels: &[QuantileLevel],
) -> Vec<Cell> {
    let base = match base {
        Ok(b) => Arc::new(b),
        Err(e) => return failed(levels.len(), &e),
    };
    if let FittedQuantileModel::Linear(m) = base.as_ref() {
        if let Some(f) = m.fits().iter().find(|f| !f.converged) {
            let e = Error::NonConvergence {
                iterations: f.iterations,
            };
            return failed(levels.len(), &e);
        }
    }
    conformalize_lower_levels(base, calib, levels, RankPolicy::Strict)
        .into_iter()
        .enumerate()
        .map(|(li, est)| {
            let est = est?;
            count_cells(|_, x| est.estimate(x), test, li)
        })
        .collect()
}

/// One simulated series, all configured models and levels.
pub fn run_iteration(cfg: &ExperimentConfig, iteration: usize) -> Result<IterationOutcome> {
    cfg.validate()?;
    let levels: Vec<QuantileLevel> = cfg
        .levels
        .iter()
        .map(|&l| QuantileLevel::new(l))
        .collect::<Result<_>>()?;
    let seed = cfg.iteration_seed(iteration);
    let spec = cfg.dgp.with_seed(seed);
    let n_total = cfg.n_lags + cfg.n_train + cfg.n_test;
    let frame = simulate(&spec, n_total)?;

    let mut cells = BTreeMap::new();
    if let Some(at) = frame.overflow_at {
        let e = Error::OverflowGuard { at };
        for &m in &cfg.models {
            cells.insert(m, failed(levels.len(), &e));
        }
        return Ok(IterationOutcome {
            iteration,
            n_test: cfg.n_test,
            cells,
            overflow: true,
        });
    }

    let data = build_supervised(&frame, cfg.n_lags)?;
    let train = data.slice(0, cfg.n_train);
    let test = data.slice(cfg.n_train, cfg.n_train + cfg.n_test);
    let split = make_split(cfg.n_train, SplitScheme::ChronologicalHalf)?;
    let (proper, calib) = split.apply(&train);
    let qrf_seed = |tag: u64| QrfConfig {
        seed: derive_seed(seed, tag),
        ..cfg.qrf
    };

    for &m in &cfg.models {
        let row = match m {
            ModelKind::Qr => qr_cells(&train, &test, &levels),
            ModelKind::Qrf => qrf_cells(&train, &test, &levels, &qrf_seed(1)),
            ModelKind::CqrQr => conformal_cells(
                fit_qr(&proper, &levels).map(Into::into),
                &calib,
                &test,
                &levels,
            ),
            ModelKind::CqrQrf => conformal_cells(
                fit_qrf(&proper, &qrf_seed(2)).map(Into::into),
                &calib,
                &test,
                &levels,
            ),
        };
        cells.insert(m, row);
    }
    Ok(IterationOutcome {
        iteration,
        n_test: cfg.n_test,
        cells,
        overflow: false,
    })
}

/// Results of one model across all iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelResult {
    pub model: ModelKind,
    /// `levels x iterations`, NaN for errored cells.
    pub per_iteration: Vec<Vec<f64>>,
    /// Pooled counts per level.
    pub pooled: Vec<PooledCell>,
    pub report: CalibrationReport,
    /// (iteration, level, error) for every errored cell.
    pub errors: Vec<(usize, f64, Error)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub config_fingerprint: u64,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub levels: Vec<f64>,
    pub iterations: usize,
    pub models: Vec<ModelResult>,
    /// Some cell errored.
    pub partial: bool,
    /// The process is explosive or every cell of some model failed.
    pub degenerate: bool,
    pub notes: Vec<String>,
    pub provenance: Provenance,
}

impl ExperimentResult {
    pub fn model(&self, kind: ModelKind) -> Option<&ModelResult> {
        self.models.iter().find(|m| m.model == kind)
    }

    /// Calibration MAE of the iteration-averaged coverage curve.
    pub fn pooled_mae(&self, kind: ModelKind) -> Option<f64> {
        self.model(kind).map(|m| m.report.pooled_mae)
    }
}

/// Reduces iteration outcomes into per-model reports. Outcomes may arrive in
/// any order.
pub fn aggregate(cfg: &ExperimentConfig, outcomes: &[IterationOutcome]) -> Result<ExperimentResult> {
    let mut sorted: Vec<&IterationOutcome> = outcomes.iter().collect();
    sorted.sort_by_key(|o| o.iteration);
    let n_levels = cfg.levels.len();
    let mut models = Vec::with_capacity(cfg.models.len());
    let mut partial = false;
    let mut degenerate = cfg.dgp.is_explosive();
    let mut notes = Vec::new();
    if cfg.dgp.is_explosive() {
        notes.push(format!("explosive process (|phi| = {} > 1)", cfg.dgp.phi[0].abs()));
    }
    if sorted.iter().any(|o| o.overflow) {
        notes.push("overflow guard fired in at least one iteration".into());
    }

    for &kind in &cfg.models {
        let mut per_iteration = vec![Vec::with_capacity(sorted.len()); n_levels];
        let mut successes = vec![0u64; n_levels];
        let mut counts = vec![0u64; n_levels];
        let mut errors = Vec::new();
        let mut per_iter_cells = Vec::new();
        for o in &sorted {
            let cells = o.cells.get(&kind).ok_or(Error::InvalidParameter {
                name: "models",
                reason: format!("iteration {} lacks model {}", o.iteration, kind.label()),
            })?;
            for (li, c) in cells.iter().enumerate() {
                match c {
                    Ok(k) => {
                        per_iteration[li].push(*k as f64 / o.n_test as f64);
                        successes[li] += k;
                        counts[li] += o.n_test as u64;
                        per_iter_cells.push(PooledCell {
                            level: cfg.levels[li],
                            successes: *k,
                            n: o.n_test as u64,
                        });
                    }
                    Err(e) => {
                        per_iteration[li].push(f64::NAN);
                        errors.push((o.iteration, cfg.levels[li], e.clone()));
                    }
                }
            }
        }
        partial |= !errors.is_empty();
        let pooled: Vec<PooledCell> = cfg
            .levels
            .iter()
            .zip(successes.iter().zip(&counts))
            .filter(|(_, (_, &n))| n > 0)
            .map(|(&level, (&s, &n))| PooledCell {
                level,
                successes: s,
                n,
            })
            .collect();
        if pooled.is_empty() {
            degenerate = true;
            notes.push(format!("{}: every cell failed", kind.label()));
            models.push(ModelResult {
                model: kind,
                report: CalibrationReport {
                    records: Vec::new(),
                    mae: f64::NAN,
                    pooled_mae: f64::NAN,
                    classification: crate::evaluation::Classification {
                        classes: Vec::new(),
                        intervals: Vec::new(),
                        within_pct: f64::NAN,
                        below_pct: f64::NAN,
                        above_pct: f64::NAN,
                    },
                    curve: Vec::new(),
                    excluded_cells: errors.len(),
                },
                per_iteration,
                pooled,
                errors,
            });
            continue;
        }
        let summary = calibration_mae_summary(&per_iteration, &cfg.levels)?;
        let pooled_mae = pooled_calibration_mae(&per_iteration, &cfg.levels)?;
        let classification = match cfg.wilson {
            WilsonPooling::Pooled => classify_levels(&pooled, Z95)?,
            WilsonPooling::PerIteration => classify_levels(&per_iter_cells, Z95)?,
        };
        let records = pooled
            .iter()
            .map(|c| CoverageRecord::from_counts(c.level, c.successes, c.n))
            .collect::<Vec<_>>();
        let curve = records.iter().map(|r| (r.level, r.coverage)).collect();
        models.push(ModelResult {
            model: kind,
            report: CalibrationReport {
                records,
                mae: summary.mae,
                pooled_mae,
                classification,
                curve,
                excluded_cells: summary.excluded,
            },
            per_iteration,
            pooled,
            errors,
        });
    }
    Ok(ExperimentResult {
        levels: cfg.levels.clone(),
        iterations: sorted.len(),
        models,
        partial,
        degenerate,
        notes,
        provenance: Provenance {
            config_fingerprint: cfg.fingerprint(),
            master_seed: cfg.master_seed,
        },
    })
}

/// Sequential driver: every iteration, then [`aggregate`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let outcomes = (0..cfg.iterations)
        .map(|i| run_iteration(cfg, i))
        .collect::<Result<Vec<_>>>()?;
    aggregate(cfg, &outcomes)
}

/// Number of exogenous regressors for a covariate/observation ratio.
pub fn exog_dimension(n_train: usize, ratio: f64) -> usize {
    (libm::round(ratio * n_train as f64) as usize).max(1)
}

/// Configurations of the exogenous study, one per `p / n` ratio.
pub fn exog_configs(template: &ExperimentConfig, ratios: &[f64], noise: Noise) -> Vec<ExperimentConfig> {
    ratios
        .iter()
        .map(|&r| ExperimentConfig {
            dgp: DgpSpec::ar2_exog(exog_dimension(template.n_train, r), noise, 0),
            ..template.clone()
        })
        .collect()
}

/// Configurations of the near-unit-root study, one per `phi`.
pub fn unit_root_configs(template: &ExperimentConfig, phis: &[f64]) -> Vec<ExperimentConfig> {
    phis.iter()
        .map(|&phi| ExperimentConfig {
            dgp: DgpSpec::ar1(phi, 0),
            n_lags: 1,
            ..template.clone()
        })
        .collect()
}

/// Runs the near-unit-root study. Explosive settings complete and carry
/// `degenerate = true`.
pub fn run_unit_root_study(template: &ExperimentConfig, phis: &[f64]) -> Result<Vec<ExperimentResult>> {
    unit_root_configs(template, phis)
        .iter()
        .map(run_experiment)
        .collect()
}

/// Mean of a per-model pooled MAE across several results (NaN-skipping).
pub fn mean_pooled_mae(results: &[ExperimentResult], kind: ModelKind) -> f64 {
    let v: Vec<f64> = results
        .iter()
        .filter_map(|r| r.pooled_mae(kind))
        .filter(|m| !m.is_nan())
        .collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Within/below/above percentages over the pooled cells of several results.
pub fn combined_classification(
    results: &[ExperimentResult],
    kind: ModelKind,
) -> Result<crate::evaluation::Classification> {
    let cells: Vec<PooledCell> = results
        .iter()
        .filter_map(|r| r.model(kind))
        .flat_map(|m| m.pooled.iter().copied())
        .collect();
    classify_levels(&cells, Z95)
}
