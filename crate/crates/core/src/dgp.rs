//! Seeded data-generating processes for the simulation studies.
//!
//! * AR(2) with Cauchy(0, 1) innovations, `phi = (0.5, -0.2)`.
//! * AR(2) plus `p` Gaussian exogenous regressors with Student-t(2) or
//!   N(0, 1) innovations.
//! * AR(1) with N(0, 1) innovations and `phi` near one.
//!
//! Stationary processes start from zero and discard `burn_in` steps. AR(1)
//! with `|phi| >= 1` has no burn-in. Heavy-tailed innovations are drawn by
//! inverse CDF from open uniforms; Gaussian draws use the ziggurat sampler of
//! `rand_distr`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::data::SupervisedSet;
use crate::error::{Error, Result};
use crate::rng::{self, Rng64};

pub const AR2_PHI: [f64; 2] = [0.5, -0.2];
pub const DEFAULT_BURN_IN: usize = 100;
pub const OVERFLOW_LIMIT: f64 = 1e300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgpKind {
    Ar2Cauchy,
    Ar2Exog,
    Ar1Root,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Noise {
    Cauchy,
    StudentT2,
    Normal,
}

impl Noise {
    pub fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Noise::Cauchy => rng::cauchy_quantile(rng::open_unit(rng)),
            Noise::StudentT2 => rng::student_t2_quantile(rng::open_unit(rng)),
            Noise::Normal => rng::standard_normal(rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub phi: Vec<f64>,
    pub noise: Noise,
    /// Exogenous dimension, 0 if none.
    pub p: usize,
    pub seed: u64,
    pub burn_in: usize,
}

impl DgpSpec {
    pub fn ar2_cauchy(seed: u64) -> Self {
        Self {
            kind: DgpKind::Ar2Cauchy,
            phi: AR2_PHI.to_vec(),
            noise: Noise::Cauchy,
            p: 0,
            seed,
            burn_in: DEFAULT_BURN_IN,
        }
    }

    pub fn ar2_exog(p: usize, noise: Noise, seed: u64) -> Self {
        Self {
            kind: DgpKind::Ar2Exog,
            phi: AR2_PHI.to_vec(),
            noise,
            p,
            seed,
            burn_in: DEFAULT_BURN_IN,
        }
    }

    pub fn ar1(phi: f64, seed: u64) -> Self {
        Self {
            kind: DgpKind::Ar1Root,
            phi: vec![phi],
            noise: Noise::Normal,
            p: 0,
            seed,
            burn_in: if phi.abs() < 1.0 { DEFAULT_BURN_IN } else { 0 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let expected = match self.kind {
            DgpKind::Ar2Cauchy | DgpKind::Ar2Exog => 2,
            DgpKind::Ar1Root => 1,
        };
        if self.phi.len() != expected {
            return Err(Error::InvalidParameter {
                name: "phi",
                reason: format!("expected {expected} coefficients, got {}", self.phi.len()),
            });
        }
        if self.phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("phi"));
        }
        match self.kind {
            DgpKind::Ar2Exog if self.p == 0 => Err(Error::InvalidParameter {
                name: "p",
                reason: "exogenous process needs p >= 1".into(),
            }),
            DgpKind::Ar2Cauchy | DgpKind::Ar1Root if self.p != 0 => Err(Error::InvalidParameter {
                name: "p",
                reason: "process has no exogenous regressors".into(),
            }),
            _ => Ok(()),
        }
    }

    /// `|phi| > 1` for AR(1).
    pub fn is_explosive(&self) -> bool {
        self.kind == DgpKind::Ar1Root && self.phi[0].abs() > 1.0
    }

    /// The same process keyed by another seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// Deterministic overrides for unit tests. When `initial` is set the output
/// starts with those values and burn-in is skipped.
#[derive(Debug, Clone, Default)]
pub struct NoiseHook {
    pub innovations: Option<Vec<f64>>,
    pub initial: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    /// Row-major `n x p` exogenous values for the recorded steps.
    pub exog: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FrameSource {
    Simulated(DgpSpec),
    External(String),
}

/// A target series with optional aligned exogenous regressors.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesFrame {
    pub y: Vec<f64>,
    /// Row-major `len x p`, `None` when there are no regressors.
    pub x: Option<Vec<f64>>,
    pub p: usize,
    pub source: FrameSource,
    /// First index at which the overflow guard fired; the series is
    /// truncated there.
    pub overflow_at: Option<usize>,
}

impl SeriesFrame {
    pub fn from_values(y: Vec<f64>, x: Option<(Vec<f64>, usize)>, description: &str) -> Result<Self> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("y"));
        }
        let (x, p) = match x {
            Some((x, p)) => {
                if x.len() != y.len() * p {
                    return Err(Error::DimensionMismatch {
                        expected: y.len() * p,
                        got: x.len(),
                    });
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("x"));
                }
                (Some(x), p)
            }
            None => (None, 0),
        };
        Ok(Self {
            y,
            x,
            p,
            source: FrameSource::External(description.into()),
            overflow_at: None,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn x_row(&self, t: usize) -> &[f64] {
        match &self.x {
            Some(x) => &x[t * self.p..(t + 1) * self.p],
            None => &[],
        }
    }
}

/// Exogenous-design parameters drawn once per series.
struct ExogDesign {
    beta: Vec<f64>,
    mean: Vec<f64>,
    sd: Vec<f64>,
}

fn draw_design(p: usize, rng: &mut Rng64) -> ExogDesign {
    let beta = (0..p).map(|_| rng.random::<f64>()).collect();
    let mean = (0..p).map(|_| rng::standard_normal(rng)).collect();
    // Diagonal covariance entries sigma_i ~ U(0, 10) are variances.
    let sd = (0..p).map(|_| libm::sqrt(10.0 * rng.random::<f64>())).collect();
    ExogDesign { beta, mean, sd }
}

/// Simulates `n_total` recorded observations of `spec`.
pub fn simulate(spec: &DgpSpec, n_total: usize) -> Result<SeriesFrame> {
    simulate_with(spec, n_total, &NoiseHook::default())
}

pub fn simulate_with(spec: &DgpSpec, n_total: usize, hook: &NoiseHook) -> Result<SeriesFrame> {
    spec.validate()?;
    if n_total == 0 {
        return Err(Error::InvalidParameter {
            name: "n_total",
            reason: "must be at least 1".into(),
        });
    }
    let p = spec.p;
    let mut rng = rng::substream(rng::derive_seed(spec.seed, 0xD6B), 0);
    let design = (p > 0).then(|| {
        let mut d = draw_design(p, &mut rng);
        if let Some(beta) = &hook.beta {
            d.beta = beta.clone();
        }
        d
    });
    if let Some(beta) = &hook.beta {
        if beta.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: beta.len(),
            });
        }
    }
    if let Some(exog) = &hook.exog {
        if exog.len() != n_total * p {
            return Err(Error::DimensionMismatch {
                expected: n_total * p,
                got: exog.len(),
            });
        }
    }
    if let Some(e) = &hook.innovations {
        if e.len() < n_total {
            return Err(Error::DimensionMismatch {
                expected: n_total,
                got: e.len(),
            });
        }
    }

    let order = spec.phi.len();
    let initial = hook.initial.clone().unwrap_or_default();
    if initial.len() > n_total {
        return Err(Error::InvalidParameter {
            name: "initial",
            reason: "more initial values than observations".into(),
        });
    }
    let burn_in = if hook.initial.is_some() { 0 } else { spec.burn_in };

    // History holds the last `order` values, most recent last.
    let mut history = vec![0.0; order];
    let mut y = Vec::with_capacity(n_total);
    let mut xs = Vec::with_capacity(n_total * p);
    let mut overflow_at = None;

    for step in 0..burn_in + n_total {
        let recorded = step.checked_sub(burn_in);
        let row: Vec<f64> = match &design {
            Some(d) => {
                let drawn: Vec<f64> = (0..p)
                    .map(|j| d.mean[j] + d.sd[j] * rng::standard_normal(&mut rng))
                    .collect();
                match (recorded, &hook.exog) {
                    (Some(r), Some(x)) => x[r * p..(r + 1) * p].to_vec(),
                    _ => drawn,
                }
            }
            None => Vec::new(),
        };
        let drawn = spec.noise.draw(&mut rng);
        let value = match recorded {
            Some(r) if r < initial.len() => initial[r],
            _ => {
                let eps = match (recorded, &hook.innovations) {
                    (Some(r), Some(e)) => e[r],
                    (None, Some(_)) => 0.0,
                    _ => drawn,
                };
                let ar: f64 = spec
                    .phi
                    .iter()
                    .zip(history.iter().rev())
                    .map(|(phi, v)| phi * v)
                    .sum();
                let exo: f64 = design
                    .as_ref()
                    .map_or(0.0, |d| d.beta.iter().zip(&row).map(|(b, x)| b * x).sum());
                ar + exo + eps
            }
        };
        if !value.is_finite() || value.abs() > OVERFLOW_LIMIT {
            overflow_at = Some(recorded.unwrap_or(0));
            break;
        }
        history.remove(0);
        history.push(value);
        if recorded.is_some() {
            y.push(value);
            xs.extend_from_slice(&row);
        }
    }

    Ok(SeriesFrame {
        y,
        x: (p > 0).then_some(xs),
        p,
        source: FrameSource::Simulated(spec.clone()),
        overflow_at,
    })
}

pub fn simulate_ar2_cauchy(n_total: usize, seed: u64) -> Result<SeriesFrame> {
    simulate(&DgpSpec::ar2_cauchy(seed), n_total)
}

pub fn simulate_ar2_exog(n_total: usize, p: usize, noise: Noise, seed: u64) -> Result<SeriesFrame> {
    simulate(&DgpSpec::ar2_exog(p, noise, seed), n_total)
}

/// AR(1). When the overflow guard fires the series is truncated and
/// `overflow_at` records where.
pub fn simulate_ar1(phi: f64, n_total: usize, seed: u64) -> Result<SeriesFrame> {
    simulate(&DgpSpec::ar1(phi, seed), n_total)
}

/// Lag-expands `frame`: row `t` has features
/// `(y[t-1], ..., y[t-n_lags], x[t])` and target `y[t]`.
pub fn build_supervised(frame: &SeriesFrame, n_lags: usize) -> Result<SupervisedSet> {
    let len = frame.len();
    if len <= n_lags {
        return Err(Error::TooShort {
            needed: n_lags,
            got: len,
        });
    }
    let p = frame.p;
    let width = n_lags + p;
    let rows = len - n_lags;
    let mut features = Vec::with_capacity(rows * width);
    let mut targets = Vec::with_capacity(rows);
    for t in n_lags..len {
        for lag in 1..=n_lags {
            features.push(frame.y[t - lag]);
        }
        features.extend_from_slice(frame.x_row(t));
        targets.push(frame.y[t]);
    }
    let mut names: Vec<String> = (1..=n_lags).map(|l| format!("y_lag{l}")).collect();
    names.extend((1..=p).map(|j| format!("x{j}")));
    SupervisedSet::new(features, targets, width, names)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ar2_recursion_with_forced_noise() {
        let hook = NoiseHook {
            innovations: Some(vec![0.0; 5]),
            initial: Some(vec![0.0, 1.0]),
            ..NoiseHook::default()
        };
        let f = simulate_with(&DgpSpec::ar2_cauchy(1), 5, &hook).unwrap();
        assert_eq!(f.y[2], 0.5);
        assert!((f.y[3] - (0.25 - 0.2)).abs() < 1e-15);
    }

    #[test]
    fn exog_fixed_point() {
        let n = 200;
        let hook = NoiseHook {
            innovations: Some(vec![0.0; n]),
            initial: Some(vec![0.0, 0.0]),
            beta: Some(vec![1.0]),
            exog: Some(vec![1.0; n]),
        };
        let f = simulate_with(&DgpSpec::ar2_exog(1, Noise::StudentT2, 3), n, &hook).unwrap();
        assert!((f.y[n - 1] - 1.0 / 0.7).abs() < 1e-12);
    }

    #[test]
    fn random_walk_and_explosive() {
        let hook = NoiseHook {
            innovations: Some(vec![1.0; 10]),
            ..NoiseHook::default()
        };
        let f = simulate_with(&DgpSpec::ar1(1.0, 0), 10, &hook).unwrap();
        for (i, v) in f.y.iter().enumerate() {
            assert_eq!(*v, (i + 1) as f64);
        }
        let hook = NoiseHook {
            innovations: Some(vec![0.0; 30]),
            initial: Some(vec![1.0]),
            ..NoiseHook::default()
        };
        let f = simulate_with(&DgpSpec::ar1(1.05, 0), 30, &hook).unwrap();
        for (t, v) in f.y.iter().enumerate() {
            assert!((v - libm::pow(1.05, t as f64)).abs() < 1e-12 * v);
        }
        assert!(DgpSpec::ar1(1.05, 0).is_explosive());
    }

    #[test]
    fn overflow_guard_truncates() {
        let spec = DgpSpec::ar1(1e10, 0);
        let f = simulate(&spec, 100).unwrap();
        let at = f.overflow_at.expect("guard fires");
        assert_eq!(f.y.len(), at);
        assert!(f.y.iter().all(|v| v.abs() <= OVERFLOW_LIMIT));
    }

    #[test]
    fn deterministic_in_seed() {
        let a = simulate_ar2_exog(50, 3, Noise::StudentT2, 9).unwrap();
        let b = simulate_ar2_exog(50, 3, Noise::StudentT2, 9).unwrap();
        let c = simulate_ar2_exog(50, 3, Noise::StudentT2, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.y, c.y);
        assert_eq!(a.x.as_ref().unwrap().len(), 150);
    }

    #[test]
    fn spec_validation() {
        let mut s = DgpSpec::ar2_cauchy(0);
        s.phi.push(0.1);
        assert!(s.validate().is_err());
        assert!(DgpSpec::ar2_exog(0, Noise::Normal, 0).validate().is_err());
    }

    #[test]
    fn supervised_rows() {
        let f = SeriesFrame::from_values(vec![1.0, 2.0, 3.0, 4.0], None, "toy").unwrap();
        let s = build_supervised(&f, 2).unwrap();
        assert_eq!(s.n_rows(), 2);
        assert_eq!(s.row(0), &[2.0, 1.0]);
        assert_eq!(s.row(1), &[3.0, 2.0]);
        assert_eq!(s.targets(), &[3.0, 4.0]);
        assert_eq!(build_supervised(&f, 3).unwrap().n_rows(), 1);
        assert!(matches!(build_supervised(&f, 4), Err(Error::TooShort { .. })));

        let g = SeriesFrame::from_values(vec![1.0, 2.0], Some((vec![5.0, 6.0, 7.0, 8.0], 2)), "x")
            .unwrap();
        let s = build_supervised(&g, 0).unwrap();
        assert_eq!(s.row(1), &[7.0, 8.0]);
        assert_eq!(s.feature_names(), &[alloc::string::String::from("x1"), alloc::string::String::from("x2")]);
    }
}
