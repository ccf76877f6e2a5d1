//! Exact solver for the pinball-loss linear program.
//!
//! The primal problem `min_b sum_i rho_tau(y_i - x_i'b)` is solved through
//! its dual
//!
//! ```text
//! max  y'a   s.t.  X'a = (1 - tau) X'1,   0 <= a_i <= 1
//! ```
//!
//! with a bounded-variable revised simplex (two phases, artificial
//! variables for phase one). At an optimal basis the simplex multipliers are
//! the regression coefficients, and the basic observations are interpolated
//! exactly, so the returned coefficients sit on a vertex of the primal
//! problem.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

/// Outcome of one solve.
#[derive(Debug, Clone)]
pub(crate) struct LpSolution {
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Status {
    Basic,
    Lower,
    Upper,
}

struct Simplex<'a> {
    /// Row-major design including the intercept column, `n x k`.
    design: &'a [f64],
    n: usize,
    k: usize,
    /// Signs of the artificial columns.
    art_sign: Vec<f64>,
    rhs: Vec<f64>,
    cost: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
    status: Vec<Status>,
    basis: Vec<usize>,
    /// Row-major `k x k` basis inverse.
    binv: Vec<f64>,
    pivots_since_refactor: usize,
    iterations: usize,
    max_iterations: usize,
}

const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;

impl Simplex<'_> {
    fn column(&self, j: usize, out: &mut [f64]) {
        if j < self.n {
            out.copy_from_slice(&self.design[j * self.k..(j + 1) * self.k]);
        } else {
            out.fill(0.0);
            let r = j - self.n;
            out[r] = self.art_sign[r];
        }
    }

    /// `pi' A_j`
    fn dot_column(&self, pi: &[f64], j: usize) -> f64 {
        if j < self.n {
            self.design[j * self.k..(j + 1) * self.k]
                .iter()
                .zip(pi)
                .map(|(a, p)| a * p)
                .sum()
        } else {
            let r = j - self.n;
            pi[r] * self.art_sign[r]
        }
    }

    fn refactor(&mut self) -> bool {
        let k = self.k;
        let mut b = DMatrix::<f64>::zeros(k, k);
        let mut col = vec![0.0; k];
        for (c, &j) in self.basis.iter().enumerate() {
            self.column(j, &mut col);
            for r in 0..k {
                b[(r, c)] = col[r];
            }
        }
        match b.lu().try_inverse() {
            Some(inv) => {
                for r in 0..k {
                    for c in 0..k {
                        self.binv[r * k + c] = inv[(r, c)];
                    }
                }
                self.pivots_since_refactor = 0;
                self.recompute_basic_values();
                true
            }
            None => false,
        }
    }

    /// x_B = B^-1 (b - N x_N)
    fn recompute_basic_values(&mut self) {
        let k = self.k;
        let mut rhs = self.rhs.clone();
        for j in 0..self.n + k {
            if self.status[j] != Status::Basic && self.x[j] != 0.0 {
                let xj = self.x[j];
                if j < self.n {
                    for (r, a) in self.design[j * k..(j + 1) * k].iter().enumerate() {
                        rhs[r] -= a * xj;
                    }
                } else {
                    let r = j - self.n;
                    rhs[r] -= self.art_sign[r] * xj;
                }
            }
        }
        for r in 0..k {
            let v: f64 = (0..k).map(|c| self.binv[r * k + c] * rhs[c]).sum();
            self.x[self.basis[r]] = v;
        }
    }

    fn multipliers(&self) -> Vec<f64> {
        let k = self.k;
        let mut pi = vec![0.0; k];
        for r in 0..k {
            let cb = self.cost[self.basis[r]];
            if cb != 0.0 {
                for c in 0..k {
                    pi[c] += cb * self.binv[r * k + c];
                }
            }
        }
        pi
    }

    /// Runs the simplex on the current cost vector until optimal or capped.
    /// Returns `true` on proven optimality.
    fn optimise(&mut self, dtol: f64) -> bool {
        let k = self.k;
        let total = self.n + k;
        let mut w = vec![0.0; k];
        let mut col = vec![0.0; k];
        let mut degenerate_run = 0usize;
        loop {
            if self.iterations >= self.max_iterations {
                return false;
            }
            let pi = self.multipliers();
            // Pricing. Dantzig's rule, switching to Bland's rule on long
            // degenerate runs to rule out cycling.
            let bland = degenerate_run > 2 * k + 20;
            let mut entering = None;
            let mut best = 0.0;
            for j in 0..total {
                let dir = match self.status[j] {
                    Status::Basic => continue,
                    Status::Lower => 1.0,
                    Status::Upper => -1.0,
                };
                if self.upper[j] == 0.0 {
                    continue;
                }
                let d = self.cost[j] - self.dot_column(&pi, j);
                let gain = -d * dir;
                if gain > dtol {
                    if bland {
                        entering = Some((j, dir));
                        break;
                    }
                    if gain > best {
                        best = gain;
                        entering = Some((j, dir));
                    }
                }
            }
            let Some((q, dir)) = entering else {
                return true;
            };
            self.iterations += 1;

            self.column(q, &mut col);
            for r in 0..k {
                w[r] = (0..k).map(|c| self.binv[r * k + c] * col[c]).sum();
            }

            // Ratio test: x_B(theta) = x_B - dir * theta * w.
            let mut theta = self.upper[q];
            let mut leave: Option<(usize, Status)> = None;
            let mut leave_pivot = 0.0;
            for r in 0..k {
                let step = dir * w[r];
                let j = self.basis[r];
                let limit = if step > PIVOT_TOL {
                    Some(((self.x[j]).max(0.0) / step, Status::Lower))
                } else if step < -PIVOT_TOL && self.upper[j].is_finite() {
                    Some(((self.upper[j] - self.x[j]).max(0.0) / -step, Status::Upper))
                } else {
                    None
                };
                if let Some((t, bound)) = limit {
                    let better = t < theta - 1e-12
                        || (t <= theta + 1e-12 && leave.is_some() && step.abs() > leave_pivot);
                    if better {
                        theta = t;
                        leave = Some((r, bound));
                        leave_pivot = step.abs();
                    }
                }
            }
            if !theta.is_finite() {
                // Unbounded direction; cannot happen for a feasible dual with
                // bounded original variables.
                return false;
            }
            degenerate_run = if theta <= 1e-12 { degenerate_run + 1 } else { 0 };

            for r in 0..k {
                let j = self.basis[r];
                self.x[j] -= dir * theta * w[r];
            }
            match leave {
                None => {
                    // Bound flip.
                    if dir > 0.0 {
                        self.x[q] = self.upper[q];
                        self.status[q] = Status::Upper;
                    } else {
                        self.x[q] = 0.0;
                        self.status[q] = Status::Lower;
                    }
                }
                Some((r, bound)) => {
                    let old = self.basis[r];
                    self.x[q] += dir * theta;
                    self.status[old] = bound;
                    self.x[old] = if bound == Status::Lower { 0.0 } else { self.upper[old] };
                    self.status[q] = Status::Basic;
                    self.basis[r] = q;
                    // Eta update of the inverse.
                    let wr = w[r];
                    for c in 0..k {
                        self.binv[r * k + c] /= wr;
                    }
                    for i in 0..k {
                        if i != r && w[i] != 0.0 {
                            let f = w[i];
                            for c in 0..k {
                                self.binv[i * k + c] -= f * self.binv[r * k + c];
                            }
                        }
                    }
                    self.pivots_since_refactor += 1;
                    if self.pivots_since_refactor >= REFACTOR_EVERY && !self.refactor() {
                        return false;
                    }
                }
            }
        }
    }
}

/// Solves the quantile regression LP for one level.
///
/// `design` is row-major `n x k` and must already contain the intercept
/// column. The caller guarantees full column rank and `n > k`.
pub(crate) fn solve_quantile_lp(
    design: &[f64],
    n: usize,
    k: usize,
    y: &[f64],
    tau: f64,
    max_iterations: usize,
) -> LpSolution {
    debug_assert_eq!(design.len(), n * k);
    // Right-hand side b = (1 - tau) X'1.
    let mut rhs = vec![0.0; k];
    for i in 0..n {
        for (r, a) in design[i * k..(i + 1) * k].iter().enumerate() {
            rhs[r] += (1.0 - tau) * a;
        }
    }

    // Crash start: observations with the largest targets sit at the upper
    // bound, which is the optimal pattern for the intercept-only problem.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
    let n_upper = libm::floor((1.0 - tau) * n as f64) as usize;
    let total = n + k;
    let mut x = vec![0.0; total];
    let mut status = vec![Status::Lower; total];
    for &i in order.iter().rev().take(n_upper) {
        x[i] = 1.0;
        status[i] = Status::Upper;
    }
    let mut residual = rhs.clone();
    for i in 0..n {
        if x[i] != 0.0 {
            for (r, a) in design[i * k..(i + 1) * k].iter().enumerate() {
                residual[r] -= a * x[i];
            }
        }
    }
    let art_sign: Vec<f64> = residual.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect();
    let mut basis = Vec::with_capacity(k);
    for r in 0..k {
        let j = n + r;
        x[j] = residual[r].abs();
        status[j] = Status::Basic;
        basis.push(j);
    }
    let mut binv = vec![0.0; k * k];
    for r in 0..k {
        binv[r * k + r] = art_sign[r];
    }
    let mut upper = vec![1.0; total];
    for u in upper.iter_mut().skip(n) {
        *u = f64::INFINITY;
    }
    let mut cost = vec![0.0; total];
    for c in cost.iter_mut().skip(n) {
        *c = 1.0;
    }

    let mut lp = Simplex {
        design,
        n,
        k,
        art_sign,
        cost,
        upper,
        x,
        status,
        basis,
        binv,
        pivots_since_refactor: 0,
        iterations: 0,
        max_iterations,
        rhs,
    };

    let scale = design.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let phase1_ok = lp.optimise(1e-11 * scale * n as f64);

    // Phase two: artificials are pinned at zero and original costs restored.
    for r in 0..k {
        lp.upper[n + r] = 0.0;
        lp.cost[n + r] = 0.0;
    }
    for i in 0..n {
        lp.cost[i] = -y[i];
    }
    let yscale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut converged = phase1_ok && lp.refactor();
    if converged {
        converged = lp.optimise(1e-11 * yscale * scale);
    }

    let coefficients = final_coefficients(&lp, y).unwrap_or_else(|| {
        let pi = lp.multipliers();
        pi.into_iter().map(|v| -v).collect()
    });
    LpSolution {
        coefficients,
        converged,
        iterations: lp.iterations,
    }
}

/// Re-solves `B' beta = y_B` from a fresh factorisation for full accuracy.
fn final_coefficients(lp: &Simplex<'_>, y: &[f64]) -> Option<Vec<f64>> {
    let k = lp.k;
    let mut bt = DMatrix::<f64>::zeros(k, k);
    let mut rhs = nalgebra::DVector::<f64>::zeros(k);
    let mut col = vec![0.0; k];
    for (c, &j) in lp.basis.iter().enumerate() {
        lp.column(j, &mut col);
        for r in 0..k {
            bt[(c, r)] = col[r];
        }
        rhs[c] = if j < lp.n { y[j] } else { 0.0 };
    }
    let sol = bt.lu().solve(&rhs)?;
    if sol.iter().all(|v| v.is_finite()) {
        Some(sol.iter().copied().collect())
    } else {
        None
    }
}
