//! Split-conformal calibration of quantile models.
//!
//! Three constructions share one finite-sample rule: given `m` calibration
//! scores, the adjustment at level `q` is the `ceil(q (m + 1))`-th smallest
//! score.
//!
//! * [`conformalize_lower`]: scores `Qhat(a, X) - Y`, estimate
//!   `Qhat(a, x) - Q_E(1 - a)`. Under exchangeability
//!   `P(Y <= estimate) <= a`.
//! * [`conformalize_upper`]: scores `Y - Qhat(1 - a, X)`, estimate
//!   `Qhat(1 - a, x) + Q_E(1 - a)`, with `P(Y <= estimate) >= 1 - a`.
//! * [`cqr_interval`]: the two-sided conformalized quantile regression band.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::data::{QuantileLevel, SupervisedSet};
use crate::error::{Error, Result};
use crate::models::FittedQuantileModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitScheme {
    /// First `ceil(n / 2)` rows train, the rest calibrate.
    ChronologicalHalf,
    Custom,
}

/// Disjoint train/calibration row sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub calib: Vec<usize>,
    pub scheme: SplitScheme,
}

impl SplitPlan {
    /// Validates a caller-supplied split over `n_rows` rows.
    pub fn custom(train: Vec<usize>, calib: Vec<usize>, n_rows: usize) -> Result<Self> {
        if train.is_empty() || calib.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut seen = alloc::vec![false; n_rows];
        for &i in train.iter().chain(&calib) {
            if i >= n_rows || seen[i] {
                return Err(Error::InvalidParameter {
                    name: "split",
                    reason: alloc::format!("row {i} is out of range or used twice"),
                });
            }
            seen[i] = true;
        }
        Ok(Self {
            train,
            calib,
            scheme: SplitScheme::Custom,
        })
    }

    /// Applies the plan to `data`.
    pub fn apply(&self, data: &SupervisedSet) -> (SupervisedSet, SupervisedSet) {
        (data.select(&self.train), data.select(&self.calib))
    }
}

/// Chronological half split of `n_rows` rows.
pub fn make_split(n_rows: usize, scheme: SplitScheme) -> Result<SplitPlan> {
    if n_rows < 4 {
        return Err(Error::TooFewRows {
            needed: 4,
            got: n_rows,
        });
    }
    match scheme {
        SplitScheme::ChronologicalHalf => {
            let cut = n_rows.div_ceil(2);
            Ok(SplitPlan {
                train: (0..cut).collect(),
                calib: (cut..n_rows).collect(),
                scheme,
            })
        }
        SplitScheme::Custom => Err(Error::InvalidParameter {
            name: "scheme",
            reason: "custom splits are built with SplitPlan::custom".into(),
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreSide {
    Lower,
    Upper,
    TwoSided,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConformityScores {
    pub scores: Vec<f64>,
    pub side: ScoreSide,
}

/// Rank `ceil(level * (m + 1))`, tolerant to representation error in
/// `level` (0.95 * 100 must give 95, not 96).
pub fn conformal_rank(level: f64, m: usize) -> usize {
    let raw = level * (m as f64 + 1.0);
    let rank = libm::ceil(raw - 1e-9 * raw.max(1.0));
    (rank.max(1.0)) as usize
}

/// The `ceil(level (m + 1))`-th smallest score.
///
/// Fails with `InsufficientCalibration` when that rank exceeds `m`: the
/// coverage guarantee is then unattainable and the adjustment would be
/// infinite.
pub fn score_quantile(scores: &[f64], level: f64) -> Result<f64> {
    QuantileLevel::new(level)?;
    let m = scores.len();
    if m == 0 {
        return Err(Error::EmptyInput);
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    let rank = conformal_rank(level, m);
    if rank > m {
        return Err(Error::InsufficientCalibration { level, m, rank });
    }
    let mut buf = scores.to_vec();
    let (_, kth, _) = buf.select_nth_unstable_by(rank - 1, f64::total_cmp);
    Ok(*kth)
}

/// What to do when the conformal rank exceeds the calibration size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankPolicy {
    /// Fail with `InsufficientCalibration`.
    #[default]
    Strict,
    /// Use the largest score instead. The estimate stays finite but loses
    /// its finite-sample guarantee; callers should report how often this
    /// happens.
    ClampToLargest,
}

/// [`score_quantile`] under a rank policy; the flag reports whether the rank
/// was clamped.
pub fn score_quantile_with(scores: &[f64], level: f64, policy: RankPolicy) -> Result<(f64, bool)> {
    match score_quantile(scores, level) {
        Err(Error::InsufficientCalibration { .. }) if policy == RankPolicy::ClampToLargest => {
            Ok((scores.iter().copied().fold(f64::NEG_INFINITY, f64::max), true))
        }
        other => other.map(|q| (q, false)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Lower,
    Upper,
}

/// A base model plus a conformal adjustment for one level.
#[derive(Debug, Clone)]
pub struct ConformalQuantileEstimator {
    base: Arc<FittedQuantileModel>,
    side: Side,
    alpha: f64,
    adjustment: f64,
    calib_size: usize,
    clamped: bool,
}

impl ConformalQuantileEstimator {
    /// Whether the adjustment came from a clamped rank.
    pub fn clamped(&self) -> bool {
        self.clamped
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `Q_E(1 - alpha)`.
    pub fn adjustment(&self) -> f64 {
        self.adjustment
    }

    pub fn calib_size(&self) -> usize {
        self.calib_size
    }

    pub fn base(&self) -> &FittedQuantileModel {
        &self.base
    }

    /// Level the estimator targets: `alpha` (lower) or `1 - alpha` (upper).
    pub fn target_level(&self) -> f64 {
        match self.side {
            Side::Lower => self.alpha,
            Side::Upper => 1.0 - self.alpha,
        }
    }

    pub fn estimate(&self, x: &[f64]) -> Result<f64> {
        let q = self.base.predict_raw(x, self.target_level())?;
        Ok(match self.side {
            Side::Lower => q - self.adjustment,
            Side::Upper => q + self.adjustment,
        })
    }
}

fn base_predictions(base: &FittedQuantileModel, calib: &SupervisedSet, tau: f64) -> Result<Vec<f64>> {
    if !base.supports(tau) {
        return Err(Error::LevelNotFitted(tau));
    }
    calib.rows().map(|x| base.predict_raw(x, tau)).collect()
}

/// Lower-tail conformal quantile at level `alpha`.
pub fn conformalize_lower(
    base: Arc<FittedQuantileModel>,
    calib: &SupervisedSet,
    alpha: QuantileLevel,
) -> Result<ConformalQuantileEstimator> {
    let a = alpha.value();
    let preds = base_predictions(&base, calib, a)?;
    let scores: Vec<f64> = preds
        .iter()
        .zip(calib.targets())
        .map(|(q, y)| q - y)
        .collect();
    let adjustment = score_quantile(&scores, 1.0 - a)?;
    Ok(ConformalQuantileEstimator {
        base,
        side: Side::Lower,
        alpha: a,
        adjustment,
        calib_size: calib.n_rows(),
        clamped: false,
    })
}

/// Upper-tail conformal quantile at level `1 - alpha`.
pub fn conformalize_upper(
    base: Arc<FittedQuantileModel>,
    calib: &SupervisedSet,
    alpha: QuantileLevel,
) -> Result<ConformalQuantileEstimator> {
    let a = alpha.value();
    let preds = base_predictions(&base, calib, 1.0 - a)?;
    let scores: Vec<f64> = preds
        .iter()
        .zip(calib.targets())
        .map(|(q, y)| y - q)
        .collect();
    let adjustment = score_quantile(&scores, 1.0 - a)?;
    Ok(ConformalQuantileEstimator {
        base,
        side: Side::Upper,
        alpha: a,
        adjustment,
        calib_size: calib.n_rows(),
        clamped: false,
    })
}

/// [`conformalize_lower`] at several levels sharing one pass of base
/// predictions over the calibration rows.
pub fn conformalize_lower_levels(
    base: Arc<FittedQuantileModel>,
    calib: &SupervisedSet,
    levels: &[QuantileLevel],
    policy: RankPolicy,
) -> Vec<Result<ConformalQuantileEstimator>> {
    let taus: Vec<f64> = levels.iter().map(|l| l.value()).collect();
    let supported: Vec<bool> = taus.iter().map(|&t| base.supports(t)).collect();
    let answerable: Vec<f64> = taus
        .iter()
        .zip(&supported)
        .filter(|(_, &s)| s)
        .map(|(&t, _)| t)
        .collect();
    let preds: Result<Vec<Vec<f64>>> = calib
        .rows()
        .map(|x| base.predict_levels(x, &answerable))
        .collect();
    let preds = match preds {
        Ok(p) => p,
        Err(e) => return levels.iter().map(|_| Err(e.clone())).collect(),
    };
    let mut column = 0usize;
    taus.iter()
        .zip(&supported)
        .map(|(&a, &ok)| {
            if !ok {
                return Err(Error::LevelNotFitted(a));
            }
            let c = column;
            column += 1;
            let scores: Vec<f64> = preds
                .iter()
                .zip(calib.targets())
                .map(|(row, y)| row[c] - y)
                .collect();
            let (adjustment, clamped) = score_quantile_with(&scores, 1.0 - a, policy)?;
            Ok(ConformalQuantileEstimator {
                base: base.clone(),
                side: Side::Lower,
                alpha: a,
                adjustment,
                calib_size: calib.n_rows(),
                clamped,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionInterval {
    pub lo: f64,
    pub hi: f64,
    /// Set when crossing base quantiles forced a collapse to the midpoint.
    pub clamped: bool,
}

/// Calibrated two-sided CQR band.
#[derive(Debug, Clone)]
pub struct CqrCalibration {
    pub alpha: f64,
    pub adjustment: f64,
    pub calib_size: usize,
}

impl CqrCalibration {
    pub fn interval(
        &self,
        base_lo: &FittedQuantileModel,
        base_hi: &FittedQuantileModel,
        x: &[f64],
    ) -> Result<PredictionInterval> {
        let lo = base_lo.predict_raw(x, self.alpha / 2.0)? - self.adjustment;
        let hi = base_hi.predict_raw(x, 1.0 - self.alpha / 2.0)? + self.adjustment;
        Ok(if lo <= hi {
            PredictionInterval {
                lo,
                hi,
                clamped: false,
            }
        } else {
            let mid = 0.5 * (lo + hi);
            PredictionInterval {
                lo: mid,
                hi: mid,
                clamped: true,
            }
        })
    }
}

/// Computes the CQR adjustment from calibration data.
pub fn calibrate_cqr(
    base_lo: &FittedQuantileModel,
    base_hi: &FittedQuantileModel,
    calib: &SupervisedSet,
    alpha: QuantileLevel,
) -> Result<CqrCalibration> {
    let a = alpha.value();
    let lo = base_predictions(base_lo, calib, a / 2.0)?;
    let hi = base_predictions(base_hi, calib, 1.0 - a / 2.0)?;
    let scores: Vec<f64> = calib
        .targets()
        .iter()
        .zip(lo.iter().zip(&hi))
        .map(|(y, (l, h))| (l - y).max(y - h))
        .collect();
    let adjustment = score_quantile(&scores, 1.0 - a)?;
    Ok(CqrCalibration {
        alpha: a,
        adjustment,
        calib_size: calib.n_rows(),
    })
}

/// Conformalized quantile regression interval at `x`.
pub fn cqr_interval(
    base_lo: &FittedQuantileModel,
    base_hi: &FittedQuantileModel,
    calib: &SupervisedSet,
    alpha: QuantileLevel,
    x: &[f64],
) -> Result<PredictionInterval> {
    calibrate_cqr(base_lo, base_hi, calib, alpha)?.interval(base_lo, base_hi, x)
}
