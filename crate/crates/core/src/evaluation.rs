//! Calibration metrics: empirical coverage, calibration MAE, Wilson-score
//! classification of quantile levels and the probability integral transform.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// z for a two-sided 95% interval.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageRecord {
    pub level: f64,
    pub coverage: f64,
    pub successes: u64,
    pub n_obs: u64,
}

impl CoverageRecord {
    pub fn from_counts(level: f64, successes: u64, n_obs: u64) -> Self {
        Self {
            level,
            coverage: if n_obs == 0 {
                f64::NAN
            } else {
                successes as f64 / n_obs as f64
            },
            successes,
            n_obs,
        }
    }
}

/// Number of `y_j <= estimates_j`.
pub fn coverage_count(estimates: &[f64], y_test: &[f64]) -> Result<u64> {
    if estimates.len() != y_test.len() {
        return Err(Error::LengthMismatch {
            left: estimates.len(),
            right: y_test.len(),
        });
    }
    if estimates.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(estimates
        .iter()
        .zip(y_test)
        .filter(|(q, y)| *y <= *q)
        .count() as u64)
}

/// Fraction of test points at or below their paired estimate.
pub fn empirical_coverage(estimates: &[f64], y_test: &[f64]) -> Result<f64> {
    Ok(coverage_count(estimates, y_test)? as f64 / y_test.len() as f64)
}

/// MAE over the finite cells of a `levels x iterations` coverage matrix,
/// plus the number of NaN (errored) cells left out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaeSummary {
    pub mae: f64,
    pub cells: usize,
    pub excluded: usize,
}

/// Mean over every `(level, iteration)` cell of `|coverage - level|`.
pub fn calibration_mae(per_iteration: &[Vec<f64>], levels: &[f64]) -> Result<f64> {
    Ok(calibration_mae_summary(per_iteration, levels)?.mae)
}

pub fn calibration_mae_summary(per_iteration: &[Vec<f64>], levels: &[f64]) -> Result<MaeSummary> {
    if per_iteration.len() != levels.len() {
        return Err(Error::LengthMismatch {
            left: per_iteration.len(),
            right: levels.len(),
        });
    }
    let mut sum = 0.0;
    let mut cells = 0usize;
    let mut excluded = 0usize;
    for (row, &level) in per_iteration.iter().zip(levels) {
        for &c in row {
            if c.is_nan() {
                excluded += 1;
            } else {
                sum += (c - level).abs();
                cells += 1;
            }
        }
    }
    if cells == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(MaeSummary {
        mae: sum / cells as f64,
        cells,
        excluded,
    })
}

/// Mean over levels of `|mean coverage across iterations - level|`.
///
/// This is the error of the averaged calibration curve; unlike
/// [`calibration_mae`] it is not inflated by the binomial noise of a single
/// 100-point test window.
pub fn pooled_calibration_mae(per_iteration: &[Vec<f64>], levels: &[f64]) -> Result<f64> {
    if per_iteration.len() != levels.len() {
        return Err(Error::LengthMismatch {
            left: per_iteration.len(),
            right: levels.len(),
        });
    }
    let mut sum = 0.0;
    let mut used = 0usize;
    for (row, &level) in per_iteration.iter().zip(levels) {
        let finite: Vec<f64> = row.iter().copied().filter(|c| !c.is_nan()).collect();
        if finite.is_empty() {
            continue;
        }
        let mean = finite.iter().sum::<f64>() / finite.len() as f64;
        sum += (mean - level).abs();
        used += 1;
    }
    if used == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(sum / used as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilsonInterval {
    pub lo: f64,
    pub hi: f64,
    pub z: f64,
}

impl WilsonInterval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Wilson score interval for `successes` out of `n`.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> Result<WilsonInterval> {
    if n == 0 || successes > n {
        return Err(Error::InvalidCounts { successes, n });
    }
    if !(z >= 0.0) || !z.is_finite() {
        return Err(Error::InvalidParameter {
            name: "z",
            reason: "must be finite and non-negative".into(),
        });
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = p + z2 / (2.0 * nf);
    let half = z * libm::sqrt(p * (1.0 - p) / nf + z2 / (4.0 * nf * nf));
    let mut lo = ((centre - half) / denom).clamp(0.0, 1.0);
    let mut hi = ((centre + half) / denom).clamp(0.0, 1.0);
    // Exact at the boundaries, where rounding would otherwise leave 1e-17.
    if successes == 0 {
        lo = 0.0;
    }
    if successes == n {
        hi = 1.0;
    }
    if z == 0.0 {
        lo = p;
        hi = p;
    }
    Ok(WilsonInterval { lo, hi, z })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LevelClass {
    Within,
    /// The nominal level lies below the interval (over-coverage).
    Below,
    /// The nominal level lies above the interval (under-coverage).
    Above,
}

impl LevelClass {
    pub fn as_str(self) -> &'static str {
        match self {
            LevelClass::Within => "within",
            LevelClass::Below => "below",
            LevelClass::Above => "above",
        }
    }
}

/// One pooled classification cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PooledCell {
    pub level: f64,
    pub successes: u64,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub classes: Vec<LevelClass>,
    pub intervals: Vec<WilsonInterval>,
    pub within_pct: f64,
    pub below_pct: f64,
    pub above_pct: f64,
}

pub fn classify_level(level: f64, ci: &WilsonInterval) -> LevelClass {
    if level < ci.lo {
        LevelClass::Below
    } else if level > ci.hi {
        LevelClass::Above
    } else {
        LevelClass::Within
    }
}

/// Classifies each cell's level against the Wilson interval of its pooled
/// coverage and summarises the shares in percent.
pub fn classify_levels(cells: &[PooledCell], z: f64) -> Result<Classification> {
    if cells.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut classes = Vec::with_capacity(cells.len());
    let mut intervals = Vec::with_capacity(cells.len());
    let mut counts = [0usize; 3];
    for c in cells {
        let ci = wilson_interval(c.successes, c.n, z)?;
        let class = classify_level(c.level, &ci);
        counts[class as usize] += 1;
        classes.push(class);
        intervals.push(ci);
    }
    let pct = |k: usize| 100.0 * k as f64 / cells.len() as f64;
    Ok(Classification {
        classes,
        intervals,
        within_pct: pct(counts[0]),
        below_pct: pct(counts[1]),
        above_pct: pct(counts[2]),
    })
}

/// Rearranges estimates into non-decreasing order (levels untouched).
pub fn monotonize(estimates: &[f64]) -> Vec<f64> {
    let mut v = estimates.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// PIT of `y` under the piecewise-linear CDF through `(estimate, level)`.
///
/// Between grid points the level is interpolated linearly. A realised value
/// equal to a run of tied estimates maps to the middle of the jump. Outside
/// the grid the CDF falls linearly to 0 at `q_min - step` and rises to 1 at
/// `q_max + step`, where `step` is the mean spacing of the estimates.
pub fn pit_value(grid: &[(f64, f64)], y: f64) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::EmptyInput);
    }
    if grid.windows(2).any(|w| !(w[0].0 < w[1].0) || w[0].1 > w[1].1) {
        return Err(Error::UnsortedGrid);
    }
    if grid.iter().any(|(l, q)| !l.is_finite() || !q.is_finite()) || !y.is_finite() {
        return Err(Error::NonFinite("pit input"));
    }
    let k = grid.len();
    let (l_min, q_min) = grid[0];
    let (l_max, q_max) = grid[k - 1];
    let mut step = if k > 1 {
        (q_max - q_min) / (k - 1) as f64
    } else {
        0.0
    };
    if !(step > 0.0) {
        step = 1e-9 * q_min.abs().max(1.0);
    }

    if y < q_min {
        let support = q_min - step;
        return Ok(if y <= support {
            0.0
        } else {
            l_min * (y - support) / step
        });
    }
    if y > q_max {
        let support = q_max + step;
        return Ok(if y >= support {
            1.0
        } else {
            l_max + (1.0 - l_max) * (y - q_max) / step
        });
    }
    // First index with estimate >= y.
    let first = grid.partition_point(|&(_, q)| q < y);
    if grid[first].1 == y {
        let last = first + grid[first..].partition_point(|&(_, q)| q <= y) - 1;
        return Ok(0.5 * (grid[first].0 + grid[last].0));
    }
    let (l0, q0) = grid[first - 1];
    let (l1, q1) = grid[first];
    Ok(l0 + (l1 - l0) * (y - q0) / (q1 - q0))
}

/// PIT for a raw (possibly crossing) grid: estimates are rearranged first.
pub fn pit_values(levels: &[f64], estimates: &[f64], y: f64) -> Result<f64> {
    if levels.len() != estimates.len() {
        return Err(Error::LengthMismatch {
            left: levels.len(),
            right: estimates.len(),
        });
    }
    let sorted = monotonize(estimates);
    let grid: Vec<(f64, f64)> = levels.iter().copied().zip(sorted).collect();
    pit_value(&grid, y)
}

/// Empirical CDF of `pits` at each reporting level.
pub fn pit_calibration_curve(pits: &[f64], levels: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted: Vec<f64> = pits.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len().max(1) as f64;
    levels
        .iter()
        .map(|&tau| {
            let count = sorted.partition_point(|&p| p <= tau);
            (tau, count as f64 / n)
        })
        .collect()
}

/// Mean absolute distance of a calibration curve from the diagonal.
pub fn curve_mae(curve: &[(f64, f64)]) -> f64 {
    if curve.is_empty() {
        return f64::NAN;
    }
    curve.iter().map(|(l, c)| (c - l).abs()).sum::<f64>() / curve.len() as f64
}

/// Kolmogorov-Smirnov distance between `sample` and U(0, 1).
pub fn ks_uniform_statistic(sample: &[f64]) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &u)| {
            let u = u.clamp(0.0, 1.0);
            let above = (i + 1) as f64 / n - u;
            let below = u - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.627_6 / libm::sqrt(n as f64)
}

/// Per-level calibration summary for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub records: Vec<CoverageRecord>,
    pub mae: f64,
    pub pooled_mae: f64,
    pub classification: Classification,
    /// (level, mean coverage) points of the calibration curve.
    pub curve: Vec<(f64, f64)>,
    /// Errored (level, iteration) cells left out of the metrics.
    pub excluded_cells: usize,
}
