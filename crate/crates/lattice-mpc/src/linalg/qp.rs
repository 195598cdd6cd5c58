//! Dense strictly convex QP solver:
//!
//! ```text
//!     minimize   1/2 z' H z
//!     subject to G z <= rhs
//! ```
//!
//! Dual active-set method: start at the unconstrained minimum z = 0,
//! repeatedly pick the most violated constraint and take primal/dual
//! steps, dropping working-set members whose multiplier would turn
//! negative. The working-set Gram matrix `G_W H^{-1} G_W'` is kept as an
//! incrementally updated Cholesky factor, so adding or removing one
//! constraint costs O(q^2).
//!
//! A warm start from a caller-supplied active set first solves the
//! equality-constrained subproblem for that set (pruning rows with
//! negative multipliers) and then resumes the ordinary iteration; when
//! the optimal active set carries over, the solve reduces to one
//! factorization and a feasibility scan.

use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct QpOptions {
    pub tol_kkt: f64,
    pub tol_feas: f64,
    pub tol_active: f64,
    pub tol_comp: f64,
    /// 0 selects the default 50 * (n + m_c).
    pub max_iter: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions {
            tol_kkt: 1e-8,
            tol_feas: 1e-8,
            tol_active: 1e-7,
            tol_comp: 1e-8,
            max_iter: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    /// Optimizer.
    pub z: DVector<f64>,
    /// Multipliers of all inequality rows (zero off the active set).
    pub lambda: DVector<f64>,
    /// Rows tight at the solution, ascending. Includes weakly active rows.
    pub active_set: Vec<usize>,
    /// Parallel to `active_set`: true when the multiplier is below
    /// `tol_active` (the row is tight but degenerate).
    pub weakly_active: Vec<bool>,
    pub status: QpStatus,
    pub iterations: usize,
}

impl QpSolution {
    /// Working set for warm-starting the next solve: strongly active rows.
    pub fn warm_set(&self) -> Vec<usize> {
        self.active_set
            .iter()
            .zip(&self.weakly_active)
            .filter(|(_, weak)| !**weak)
            .map(|(j, _)| *j)
            .collect()
    }

    /// (stationarity, worst feasibility violation, most negative lambda,
    /// worst complementarity product) residuals against the given data.
    pub fn kkt_residuals(
        &self,
        h: &DMatrix<f64>,
        g: &DMatrix<f64>,
        rhs: &DVector<f64>,
    ) -> (f64, f64, f64, f64) {
        let stat = h * &self.z + g.transpose() * &self.lambda;
        let stationarity = stat.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let slack = g * &self.z - rhs;
        let feas = slack.iter().fold(0.0f64, |a, v| a.max(*v));
        let neg_lambda = self.lambda.iter().fold(0.0f64, |a, v| a.min(*v));
        let comp = self
            .lambda
            .iter()
            .zip(slack.iter())
            .fold(0.0f64, |a, (l, s)| a.max((l * s).abs()));
        (stationarity, feas, neg_lambda, comp)
    }
}

/// Growable Cholesky factor of the working-set Gram matrix.
struct WorkingFactor {
    /// Lower-triangular entries, row-major over the leading q x q block.
    l: DMatrix<f64>,
    q: usize,
}

impl WorkingFactor {
    fn new(cap: usize) -> Self {
        WorkingFactor {
            l: DMatrix::zeros(cap, cap),
            q: 0,
        }
    }

    /// Appends a row/column whose Gram column against the current working
    /// set is `col` with diagonal entry `diag`. Returns false when the new
    /// row is numerically dependent on the existing ones.
    fn push(&mut self, col: &[f64], diag: f64, tol: f64) -> bool {
        let q = self.q;
        if q + 1 > self.l.nrows() {
            let cap = (self.l.nrows() * 2).max(8);
            let mut bigger = DMatrix::zeros(cap, cap);
            bigger.view_mut((0, 0), (q, q)).copy_from(&self.l.view((0, 0), (q, q)));
            self.l = bigger;
        }
        // forward solve L w = col
        let mut w = vec![0.0; q];
        for i in 0..q {
            let mut s = col[i];
            for k in 0..i {
                s -= self.l[(i, k)] * w[k];
            }
            w[i] = s / self.l[(i, i)];
        }
        let rem = diag - w.iter().map(|v| v * v).sum::<f64>();
        if rem <= tol * diag.abs().max(1e-300) {
            return false;
        }
        for (k, v) in w.iter().enumerate() {
            self.l[(q, k)] = *v;
        }
        self.l[(q, q)] = rem.sqrt();
        self.q = q + 1;
        true
    }

    /// Removes row/column `k`, re-triangularizing the trailing block with
    /// a rank-one Cholesky update.
    fn remove(&mut self, k: usize) {
        let q = self.q;
        let t = q - k - 1;
        let v: Vec<f64> = (0..t).map(|i| self.l[(k + 1 + i, k)]).collect();
        // shift rows up, dropping column k
        for i in (k + 1)..q {
            for j in 0..q {
                let src = self.l[(i, j)];
                self.l[(i - 1, if j > k { j - 1 } else { j })] = if j == k { 0.0 } else { src };
            }
        }
        for j in 0..q {
            self.l[(q - 1, j)] = 0.0;
        }
        self.q = q - 1;
        // rank-one update of trailing t x t block at (k, k) by vector v
        let mut v = v;
        for j in 0..t {
            let jj = k + j;
            let ljj = self.l[(jj, jj)];
            let r = (ljj * ljj + v[j] * v[j]).sqrt();
            let c = r / ljj;
            let s = v[j] / ljj;
            self.l[(jj, jj)] = r;
            for i in (j + 1)..t {
                let ii = k + i;
                self.l[(ii, jj)] = (self.l[(ii, jj)] + s * v[i]) / c;
                v[i] = c * v[i] - s * self.l[(ii, jj)];
            }
        }
    }

    /// Solves M x = b through the factor.
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let q = self.q;
        debug_assert_eq!(b.len(), q);
        let mut x = b.to_vec();
        for i in 0..q {
            for k in 0..i {
                let t = self.l[(i, k)] * x[k];
                x[i] -= t;
            }
            x[i] /= self.l[(i, i)];
        }
        for i in (0..q).rev() {
            for k in (i + 1)..q {
                let t = self.l[(k, i)] * x[k];
                x[i] -= t;
            }
            x[i] /= self.l[(i, i)];
        }
        x
    }
}

/// Factored problem data, reusable across right-hand sides. Holds the
/// Cholesky factor of H, V = H^{-1} G' and the full Gram matrix
/// G H^{-1} G' so that working-set updates never touch H again.
pub struct DenseQp {
    h: DMatrix<f64>,
    g: DMatrix<f64>,
    v: DMatrix<f64>,
    gram: DMatrix<f64>,
    n: usize,
    mc: usize,
}

impl DenseQp {
    pub fn new(h: DMatrix<f64>, g: DMatrix<f64>) -> Result<Self> {
        super::check_finite_mat("solve_qp H", &h)?;
        super::check_finite_mat("solve_qp G", &g)?;
        if !h.is_square() {
            return Err(Error::DimensionMismatch {
                context: "solve_qp H",
                expected: "square".into(),
                got: format!("{}x{}", h.nrows(), h.ncols()),
            });
        }
        let n = h.nrows();
        if g.ncols() != n && g.nrows() > 0 {
            return Err(Error::DimensionMismatch {
                context: "solve_qp G",
                expected: format!("{} columns", n),
                got: format!("{}", g.ncols()),
            });
        }
        if !super::is_symmetric(&h, 1e-8) {
            return Err(Error::NotSpd { context: "solve_qp H" });
        }
        let hs = (&h + h.transpose()) * 0.5;
        let chol: Cholesky<f64, Dyn> =
            Cholesky::new(hs.clone()).ok_or(Error::NotSpd { context: "solve_qp H" })?;
        let v = chol.solve(&g.transpose());
        let gram = &g * &v;
        let mc = g.nrows();
        Ok(DenseQp {
            h: hs,
            g,
            v,
            gram,
            n,
            mc,
        })
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    /// V = H^{-1} G', shared with the explicit-law recovery.
    pub fn hinv_gt(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn solve(&self, rhs: &DVector<f64>, opts: &QpOptions) -> Result<QpSolution> {
        self.solve_warm(rhs, opts, &[])
    }

    pub fn solve_warm(
        &self,
        rhs: &DVector<f64>,
        opts: &QpOptions,
        warm: &[usize],
    ) -> Result<QpSolution> {
        if rhs.len() != self.mc {
            return Err(Error::DimensionMismatch {
                context: "solve_qp rhs",
                expected: format!("{}", self.mc),
                got: format!("{}", rhs.len()),
            });
        }
        super::check_finite_vec("solve_qp rhs", rhs)?;
        let max_iter = if opts.max_iter == 0 {
            50 * (self.n + self.mc)
        } else {
            opts.max_iter
        };
        const TOL_DEP: f64 = 1e-12;

        let mut working: Vec<usize> = Vec::new();
        let mut lam_w: Vec<f64> = Vec::new();
        let mut factor = WorkingFactor::new(16);
        let mut z = DVector::zeros(self.n);
        let mut iters = 0usize;

        // Warm start: install the supplied set (skipping dependent rows),
        // solve the equality subproblem, prune negative multipliers.
        if !warm.is_empty() {
            for &j in warm {
                if j >= self.mc || working.contains(&j) {
                    continue;
                }
                let col: Vec<f64> = working.iter().map(|&i| self.gram[(i, j)]).collect();
                if factor.push(&col, self.gram[(j, j)], TOL_DEP) {
                    working.push(j);
                }
            }
            loop {
                if working.is_empty() {
                    break;
                }
                let rhs_w: Vec<f64> = working.iter().map(|&i| rhs[i]).collect();
                let sol = factor.solve(&rhs_w);
                lam_w = sol.iter().map(|v| -v).collect();
                match lam_w
                    .iter()
                    .enumerate()
                    .filter(|(_, l)| **l < 0.0)
                    .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(k, _)| k)
                {
                    Some(k) => {
                        factor.remove(k);
                        working.remove(k);
                    }
                    None => break,
                }
            }
            z = DVector::zeros(self.n);
            for (k, &j) in working.iter().enumerate() {
                z.axpy(-lam_w[k], &self.v.column(j), 1.0);
            }
        }

        loop {
            // Most violated constraint outside the working set.
            let slack = &self.g * &z - rhs;
            let mut p = usize::MAX;
            let mut worst = opts.tol_feas;
            for j in 0..self.mc {
                if slack[j] > worst && !working.contains(&j) {
                    worst = slack[j];
                    p = j;
                }
            }
            if p == usize::MAX {
                return Ok(self.finish(z, working, lam_w, rhs, opts, iters, QpStatus::Optimal));
            }

            let mut lam_p = 0.0;
            // Inner loop: step toward constraint p, dropping blockers.
            loop {
                iters += 1;
                if iters > max_iter {
                    return Ok(self.finish(z, working, lam_w, rhs, opts, iters, QpStatus::MaxIter));
                }
                let q = working.len();
                let col: Vec<f64> = working.iter().map(|&i| self.gram[(i, p)]).collect();
                let u = if q > 0 { factor.solve(&col) } else { Vec::new() };
                let kappa = self.gram[(p, p)] - col.iter().zip(&u).map(|(c, w)| c * w).sum::<f64>();
                let s_p = self.g.row(p).dot(&z.transpose()) - rhs[p];

                let t1 = if kappa > TOL_DEP * self.gram[(p, p)].abs().max(1e-300) {
                    s_p / kappa
                } else {
                    f64::INFINITY
                };
                let mut t2 = f64::INFINITY;
                let mut drop_k = usize::MAX;
                for (k, &uk) in u.iter().enumerate() {
                    if uk > 1e-12 {
                        let ratio = lam_w[k] / uk;
                        if ratio < t2 {
                            t2 = ratio;
                            drop_k = k;
                        }
                    }
                }
                if !t1.is_finite() && !t2.is_finite() {
                    return Ok(self.finish(
                        z,
                        working,
                        lam_w,
                        rhs,
                        opts,
                        iters,
                        QpStatus::Infeasible,
                    ));
                }
                let t = t1.min(t2);

                // primal direction d = -(V_p - V_W u); z += t d
                if t > 0.0 {
                    z.axpy(-t, &self.v.column(p), 1.0);
                    for (k, &j) in working.iter().enumerate() {
                        z.axpy(t * u[k], &self.v.column(j), 1.0);
                    }
                }
                for (lk, uk) in lam_w.iter_mut().zip(&u) {
                    *lk -= t * uk;
                }
                lam_p += t;

                if t2 < t1 {
                    factor.remove(drop_k);
                    working.remove(drop_k);
                    lam_w.remove(drop_k);
                    // keep stepping toward p with the reduced working set
                } else {
                    let col: Vec<f64> = working.iter().map(|&i| self.gram[(i, p)]).collect();
                    let pushed = factor.push(&col, self.gram[(p, p)], TOL_DEP);
                    debug_assert!(pushed, "full step onto a dependent constraint");
                    working.push(p);
                    lam_w.push(lam_p);
                    break;
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        z: DVector<f64>,
        working: Vec<usize>,
        lam_w: Vec<f64>,
        rhs: &DVector<f64>,
        opts: &QpOptions,
        iterations: usize,
        status: QpStatus,
    ) -> QpSolution {
        let mut lambda = DVector::zeros(self.mc);
        for (k, &j) in working.iter().enumerate() {
            lambda[j] = lam_w[k];
        }
        let slack = &self.g * &z - rhs;
        let mut active_set = Vec::new();
        let mut weakly_active = Vec::new();
        for j in 0..self.mc {
            if slack[j].abs() <= opts.tol_feas || lambda[j] > opts.tol_active {
                active_set.push(j);
                weakly_active.push(lambda[j] <= opts.tol_active);
            }
        }
        QpSolution {
            z,
            lambda,
            active_set,
            weakly_active,
            status,
            iterations,
        }
    }
}

/// One-shot solve; factor `H` every call. Reuse [`DenseQp`] when solving
/// the same problem for many right-hand sides.
pub fn solve_qp(
    h: &DMatrix<f64>,
    g: &DMatrix<f64>,
    rhs: &DVector<f64>,
    opts: &QpOptions,
) -> Result<QpSolution> {
    DenseQp::new(h.clone(), g.clone())?.solve(rhs, opts)
}
