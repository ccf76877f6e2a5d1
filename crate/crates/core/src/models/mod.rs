//! Base conditional-quantile learners.

mod forest;
mod linear;
mod simplex;

use alloc::vec::Vec;

pub use forest::{fit_qrf, QrfConfig, QuantileForest};
pub use linear::{fit_qr, pinball, pinball_loss, LevelFit, LinearQuantileModel};

use crate::data::QuantileLevel;
use crate::error::Result;

/// A trained estimator answering `(x, tau) -> quantile`.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedQuantileModel {
    Linear(LinearQuantileModel),
    Forest(QuantileForest),
}

impl From<LinearQuantileModel> for FittedQuantileModel {
    fn from(m: LinearQuantileModel) -> Self {
        Self::Linear(m)
    }
}

impl From<QuantileForest> for FittedQuantileModel {
    fn from(m: QuantileForest) -> Self {
        Self::Forest(m)
    }
}

impl FittedQuantileModel {
    pub fn n_features(&self) -> usize {
        match self {
            Self::Linear(m) => m.n_features(),
            Self::Forest(m) => m.n_features(),
        }
    }

    /// Whether the model can answer `tau` (any level for a forest).
    pub fn supports(&self, tau: f64) -> bool {
        match self {
            Self::Linear(m) => m.level_fit(tau).is_some(),
            Self::Forest(_) => true,
        }
    }

    pub fn predict(&self, x: &[f64], tau: QuantileLevel) -> Result<f64> {
        self.predict_raw(x, tau.value())
    }

    pub(crate) fn predict_raw(&self, x: &[f64], tau: f64) -> Result<f64> {
        match self {
            Self::Linear(m) => m.predict(x, tau),
            Self::Forest(m) => m.predict(x, tau),
        }
    }

    /// Predictions at several levels for one feature vector.
    pub fn predict_levels(&self, x: &[f64], taus: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Linear(m) => taus.iter().map(|&t| m.predict(x, t)).collect(),
            Self::Forest(m) => m.predict_many(x, taus),
        }
    }
}

/// `predict_quantile` entry point.
pub fn predict_quantile(model: &FittedQuantileModel, x: &[f64], tau: QuantileLevel) -> Result<f64> {
    model.predict(x, tau)
}
