//! Linear quantile regression (Koenker-Bassett).

use alloc::vec;
use alloc::vec::Vec;

use super::simplex::solve_quantile_lp;
use crate::data::{QuantileLevel, SupervisedSet};
use crate::error::{Error, Result};

/// Coefficients fitted at one level. `coefficients[0]` is the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelFit {
    pub tau: f64,
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// One coefficient vector per fitted level. Levels are fitted independently,
/// so predictions may cross between levels.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearQuantileModel {
    n_features: usize,
    fits: Vec<LevelFit>,
}

/// Pinball (check) loss `u * (tau - 1[u < 0])`.
#[inline]
pub fn pinball(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

/// Total pinball loss of an affine fit on `data`.
pub fn pinball_loss(data: &SupervisedSet, coefficients: &[f64], tau: f64) -> f64 {
    data.rows()
        .zip(data.targets())
        .map(|(x, &y)| pinball(y - affine(coefficients, x), tau))
        .sum()
}

#[inline]
fn affine(coefficients: &[f64], x: &[f64]) -> f64 {
    coefficients[0]
        + coefficients[1..]
            .iter()
            .zip(x)
            .map(|(b, v)| b * v)
            .sum::<f64>()
}

/// Indices of columns of `[1, X]` that are linearly dependent on earlier
/// columns (greedy Gram-Schmidt).
fn collinear_columns(design: &[f64], n: usize, k: usize) -> Vec<usize> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..k {
        let mut v: Vec<f64> = (0..n).map(|i| design[i * k + j]).collect();
        let norm0 = libm::sqrt(v.iter().map(|a| a * a).sum::<f64>());
        for _ in 0..2 {
            for q in &basis {
                let d: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= d * qi;
                }
            }
        }
        let norm = libm::sqrt(v.iter().map(|a| a * a).sum::<f64>());
        if norm0 == 0.0 || norm <= 1e-10 * norm0 {
            dependent.push(j);
        } else {
            v.iter_mut().for_each(|a| *a /= norm);
            basis.push(v);
        }
    }
    dependent
}

fn design_with_intercept(data: &SupervisedSet) -> Vec<f64> {
    let k = data.n_features() + 1;
    let mut design = vec![0.0; data.n_rows() * k];
    for (i, row) in data.rows().enumerate() {
        design[i * k] = 1.0;
        design[i * k + 1..(i + 1) * k].copy_from_slice(row);
    }
    design
}

/// Fits linear quantile regression at each level in `levels`.
///
/// An intercept column is always prepended. Every level is solved to an
/// exact vertex optimum of the pinball LP; a level that hits the iteration
/// cap keeps its best iterate with `converged == false`.
pub fn fit_qr(data: &SupervisedSet, levels: &[QuantileLevel]) -> Result<LinearQuantileModel> {
    if levels.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = data.n_rows();
    let k = data.n_features() + 1;
    if n < k + 1 {
        return Err(Error::TooFewRows {
            needed: k + 1,
            got: n,
        });
    }
    let design = design_with_intercept(data);
    let dependent = collinear_columns(&design, n, k);
    if !dependent.is_empty() {
        return Err(Error::SingularDesign { columns: dependent });
    }
    let max_iterations = 50 * (n + k) + 1000;
    let fits = levels
        .iter()
        .map(|level| {
            let tau = level.value();
            let sol = solve_quantile_lp(&design, n, k, data.targets(), tau, max_iterations);
            LevelFit {
                tau,
                coefficients: sol.coefficients,
                converged: sol.converged,
                iterations: sol.iterations,
            }
        })
        .collect();
    Ok(LinearQuantileModel {
        n_features: data.n_features(),
        fits,
    })
}

impl LinearQuantileModel {
    /// Builds a model from known coefficients.
    pub fn from_coefficients(n_features: usize, fits: Vec<(f64, Vec<f64>)>) -> Result<Self> {
        let mut out = Vec::with_capacity(fits.len());
        for (tau, coefficients) in fits {
            QuantileLevel::new(tau)?;
            if coefficients.len() != n_features + 1 {
                return Err(Error::DimensionMismatch {
                    expected: n_features + 1,
                    got: coefficients.len(),
                });
            }
            out.push(LevelFit {
                tau,
                coefficients,
                converged: true,
                iterations: 0,
            });
        }
        Ok(Self {
            n_features,
            fits: out,
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn fits(&self) -> &[LevelFit] {
        &self.fits
    }

    pub fn fitted_levels(&self) -> impl Iterator<Item = f64> + '_ {
        self.fits.iter().map(|f| f.tau)
    }

    pub fn level_fit(&self, tau: f64) -> Option<&LevelFit> {
        self.fits.iter().find(|f| (f.tau - tau).abs() < 1e-12)
    }

    pub fn coefficients(&self, tau: f64) -> Option<&[f64]> {
        self.level_fit(tau).map(|f| f.coefficients.as_slice())
    }

    /// `Err(NonConvergence)` if any level stopped at the iteration cap.
    pub fn ensure_converged(&self) -> Result<()> {
        match self.fits.iter().find(|f| !f.converged) {
            Some(f) => Err(Error::NonConvergence {
                iterations: f.iterations,
            }),
            None => Ok(()),
        }
    }

    pub fn predict(&self, x: &[f64], tau: f64) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let fit = self.level_fit(tau).ok_or(Error::LevelNotFitted(tau))?;
        Ok(affine(&fit.coefficients, x))
    }
}
