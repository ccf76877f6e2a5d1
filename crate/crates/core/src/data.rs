//! Shared data containers.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// A probability level strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct QuantileLevel(f64);

impl QuantileLevel {
    pub fn new(tau: f64) -> Result<Self> {
        if tau > 0.0 && tau < 1.0 {
            Ok(Self(tau))
        } else {
            Err(Error::InvalidLevel(tau))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// `1 - tau`.
    pub fn complement(self) -> Self {
        Self(1.0 - self.0)
    }
}

impl TryFrom<f64> for QuantileLevel {
    type Error = Error;

    fn try_from(tau: f64) -> Result<Self> {
        Self::new(tau)
    }
}

/// The 20 reporting levels {0.01, 0.05, 0.10, ..., 0.95}.
pub fn reporting_levels() -> Vec<f64> {
    let mut levels = Vec::with_capacity(20);
    levels.push(0.01);
    for k in 1..20 {
        levels.push((5 * k) as f64 / 100.0);
    }
    levels
}

/// The fine grid {0.01, 0.02, ..., 0.99}.
pub fn fine_grid() -> Vec<f64> {
    (1..100).map(|k| k as f64 / 100.0).collect()
}

/// Checks that `levels` is non-empty, strictly increasing and inside (0, 1).
pub fn validate_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::EmptyInput);
    }
    for &l in levels {
        QuantileLevel::new(l)?;
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter {
            name: "levels",
            reason: "levels must be strictly increasing".into(),
        });
    }
    Ok(())
}

/// Lag-expanded design matrix with aligned targets. Rows keep the temporal
/// order of the source series. Features are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedSet {
    features: Vec<f64>,
    targets: Vec<f64>,
    n_features: usize,
    feature_names: Vec<String>,
}

impl SupervisedSet {
    pub fn new(
        features: Vec<f64>,
        targets: Vec<f64>,
        n_features: usize,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if features.len() != targets.len() * n_features {
            return Err(Error::DimensionMismatch {
                expected: targets.len() * n_features,
                got: features.len(),
            });
        }
        if feature_names.len() != n_features {
            return Err(Error::DimensionMismatch {
                expected: n_features,
                got: feature_names.len(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("targets"));
        }
        Ok(Self {
            features,
            targets,
            n_features,
            feature_names,
        })
    }

    /// Builds a set from row vectors with generated names `x1..xp`.
    pub fn from_rows(rows: &[Vec<f64>], targets: Vec<f64>) -> Result<Self> {
        let n_features = rows.first().map_or(0, Vec::len);
        if rows.len() != targets.len() {
            return Err(Error::LengthMismatch {
                left: rows.len(),
                right: targets.len(),
            });
        }
        let mut features = Vec::with_capacity(rows.len() * n_features);
        for row in rows {
            if row.len() != n_features {
                return Err(Error::DimensionMismatch {
                    expected: n_features,
                    got: row.len(),
                });
            }
            features.extend_from_slice(row);
        }
        let names = (1..=n_features).map(|j| alloc::format!("x{j}")).collect();
        Self::new(features, targets, n_features, names)
    }

    /// Intercept-only data: no predictors.
    pub fn targets_only(targets: Vec<f64>) -> Result<Self> {
        Self::new(Vec::new(), targets, 0, Vec::new())
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    #[inline]
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.n_rows()).map(move |i| self.row(i))
    }

    #[inline]
    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    #[inline]
    pub fn feature(&self, i: usize, j: usize) -> f64 {
        self.features[i * self.n_features + j]
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Rows `indices` in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            targets.push(self.targets[i]);
        }
        Self {
            features,
            targets,
            n_features: self.n_features,
            feature_names: self.feature_names.clone(),
        }
    }

    /// Contiguous row range `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            features: self.features[start * self.n_features..end * self.n_features].to_vec(),
            targets: self.targets[start..end].to_vec(),
            n_features: self.n_features,
            feature_names: self.feature_names.clone(),
        }
    }

    /// Same rows with every target replaced by `f(target)`.
    pub fn map_targets(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            features: self.features.clone(),
            targets: self.targets.iter().map(|&y| f(y)).collect(),
            n_features: self.n_features,
            feature_names: self.feature_names.clone(),
        }
    }
}
