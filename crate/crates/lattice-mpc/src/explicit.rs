//! Recovery of the local affine control law and its critical region from
//! the KKT conditions of the condensed QP at one sample state.
//!
//! With active rows A of `Gz <= W + Sx`:
//!
//! ```text
//!   z(x) = H^{-1} G_A' (G_A H^{-1} G_A')^{-1} (W_A + S_A x)
//!   lambda(x) = -(G_A H^{-1} G_A')^{-1} (W_A + S_A x) >= 0
//!   G_N z(x) <= W_N + S_N x
//! ```
//!
//! The multiplier rows and the inactive-row feasibility conditions
//! assemble the polyhedral critical region on which the law stays
//! optimal.

use crate::error::{Error, Result};
use crate::linalg::{QpOptions, QpStatus};
use crate::mpc::MpQp;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Coefficient tolerance under which two affine pieces are the same.
pub const TOL_PIECE: f64 = 1e-6;

/// One local control law `U = f x + g`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePiece {
    pub f: DMatrix<f64>,
    pub g: DVector<f64>,
}

impl AffinePiece {
    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.f * x + &self.g
    }

    /// Restriction to the first m output rows (the applied input).
    pub fn first_input(&self, m: usize) -> AffinePiece {
        AffinePiece {
            f: self.f.rows(0, m).clone_owned(),
            g: self.g.rows(0, m).clone_owned(),
        }
    }

    pub fn approx_eq(&self, other: &AffinePiece, tol: f64) -> bool {
        if self.f.shape() != other.f.shape() || self.g.len() != other.g.len() {
            return false;
        }
        let df = crate::linalg::inf_norm_mat(&(&self.f - &other.f));
        let dg = crate::linalg::inf_norm_vec(&(&self.g - &other.g));
        df <= tol && dg <= tol
    }
}

/// Polyhedral validity region `H x <= K` of one affine piece.
#[derive(Debug, Clone)]
pub struct CriticalRegion {
    pub h: DMatrix<f64>,
    pub k: DVector<f64>,
    pub active_set: Vec<usize>,
    pub lower_dimensional: bool,
}

impl CriticalRegion {
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        let r = &self.h * x - &self.k;
        r.iter().all(|v| *v <= tol)
    }
}

/// Options for the law recovery.
#[derive(Debug, Clone)]
pub struct LawOptions {
    pub qp: QpOptions,
    /// Ball radius for the full-dimensionality probe of the region.
    pub interior_radius: f64,
}

impl Default for LawOptions {
    fn default() -> Self {
        LawOptions {
            qp: QpOptions::default(),
            interior_radius: 1e-8,
        }
    }
}

/// Recovers the affine law and critical region at a feasible state.
///
/// Weakly active constraints (tight rows with multiplier below
/// `tol_active`) are excluded from the active set used in the formulas;
/// they stay honored through the inactive-row feasibility conditions.
/// Rank-deficient active normals are pruned by pivoted Gram-Schmidt in
/// pivot order.
pub fn local_affine_law(qp: &MpQp, x: &DVector<f64>) -> Result<(AffinePiece, CriticalRegion)> {
    local_affine_law_opts(qp, x, &LawOptions::default())
}

pub fn local_affine_law_opts(
    qp: &MpQp,
    x: &DVector<f64>,
    opts: &LawOptions,
) -> Result<(AffinePiece, CriticalRegion)> {
    let sol = qp.solve_at(x, &opts.qp, &[])?;
    local_affine_law_from_solution(qp, x, &sol, opts)
}

/// Law recovery reusing an existing (typically warm-started) QP solution
/// at `x`.
pub fn local_affine_law_from_solution(
    qp: &MpQp,
    x: &DVector<f64>,
    sol: &crate::linalg::QpSolution,
    opts: &LawOptions,
) -> Result<(AffinePiece, CriticalRegion)> {
    match sol.status {
        QpStatus::Optimal => {}
        QpStatus::Infeasible => return Err(Error::QpInfeasible),
        QpStatus::MaxIter => return Err(Error::QpMaxIter(sol.iterations)),
    }
    law_from_active_set(qp, x, &sol.warm_set(), &sol.z, opts)
}

/// The affine piece alone, skipping region assembly; used for bulk
/// sampling where only the law matters.
pub fn local_law_piece(
    qp: &MpQp,
    x: &DVector<f64>,
    sol: &crate::linalg::QpSolution,
) -> Result<AffinePiece> {
    match sol.status {
        QpStatus::Optimal => {}
        QpStatus::Infeasible => return Err(Error::QpInfeasible),
        QpStatus::MaxIter => return Err(Error::QpMaxIter(sol.iterations)),
    }
    let kept = prune_dependent_rows(qp.engine().gram(), &sol.warm_set());
    let (z_f, z_g) = law_z_map(qp, &kept)?;
    let z_check = &z_f * x + &z_g;
    if (z_check - &sol.z).norm() > 1e-7 * (1.0 + sol.z.norm()) {
        return Err(Error::DegenerateActiveSet(
            "recovered law does not reproduce the QP optimizer at the sample".into(),
        ));
    }
    Ok(AffinePiece {
        f: &z_f - &qp.back_e,
        g: &z_g - &qp.back_e0,
    })
}

/// z(x') = z_f x' + z_g for the pruned active set.
fn law_z_map(qp: &MpQp, kept: &[usize]) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = qp.n;
    let nz = qp.h.nrows();
    if kept.is_empty() {
        return Ok((DMatrix::zeros(nz, n), DVector::zeros(nz)));
    }
    let gram = qp.engine().gram();
    let v = qp.engine().hinv_gt();
    let q = kept.len();
    let m_a = DMatrix::from_fn(q, q, |i, j| gram[(kept[i], kept[j])]);
    let chol = nalgebra::Cholesky::new(m_a).ok_or_else(|| {
        Error::DegenerateActiveSet(format!(
            "Gram matrix of {q} active rows is singular after pruning"
        ))
    })?;
    let s_a = DMatrix::from_fn(q, n, |i, j| qp.s[(kept[i], j)]);
    let w_a = DVector::from_fn(q, |i, _| qp.w[kept[i]]);
    let mi_s = chol.solve(&s_a);
    let mi_w = chol.solve(&w_a);
    let mut v_a = DMatrix::zeros(nz, q);
    for (col, &j) in kept.iter().enumerate() {
        v_a.set_column(col, &v.column(j));
    }
    Ok((&v_a * &mi_s, &v_a * &mi_w))
}

fn law_from_active_set(
    qp: &MpQp,
    x: &DVector<f64>,
    active: &[usize],
    z_star: &DVector<f64>,
    opts: &LawOptions,
) -> Result<(AffinePiece, CriticalRegion)> {
    let n = qp.n;
    let mc = qp.g.nrows();
    let gram = qp.engine().gram();

    // prune dependent active normals, pivot = largest remaining residual
    let kept = prune_dependent_rows(gram, active);

    // z(x') = T (W_A + S_A x') with T = H^{-1} G_A' M^{-1}
    let (z_f, z_g) = law_z_map(qp, &kept)?;
    // lambda(x') = -M^{-1}(W_A + S_A x') >= 0 -> (M^{-1}S_A) x' <= -M^{-1}W_A
    let (lam_f, lam_g) = if kept.is_empty() {
        (DMatrix::zeros(0, n), DVector::zeros(0))
    } else {
        let q = kept.len();
        let m_a = DMatrix::from_fn(q, q, |i, j| gram[(kept[i], kept[j])]);
        let chol = nalgebra::Cholesky::new(m_a).ok_or_else(|| {
            Error::DegenerateActiveSet(format!(
                "Gram matrix of {q} active rows is singular after pruning"
            ))
        })?;
        let s_a = DMatrix::from_fn(q, n, |i, j| qp.s[(kept[i], j)]);
        let w_a = DVector::from_fn(q, |i, _| qp.w[kept[i]]);
        (chol.solve(&s_a), -chol.solve(&w_a))
    };

    // the law must reproduce the optimizer at the generating state
    let z_check = &z_f * x + &z_g;
    if (z_check - z_star).norm() > 1e-7 * (1.0 + z_star.norm()) {
        return Err(Error::DegenerateActiveSet(
            "recovered law does not reproduce the QP optimizer at the sample".into(),
        ));
    }

    // U(x') = z(x') - (E x' + e0)
    let piece = AffinePiece {
        f: &z_f - &qp.back_e,
        g: &z_g - &qp.back_e0,
    };

    // region rows: multiplier nonnegativity, then inactive-row primal
    // feasibility (G_N z(x') - S_N) x' <= W_N - ...
    let in_kept = {
        let mut mask = vec![false; mc];
        for &j in &kept {
            mask[j] = true;
        }
        mask
    };
    let mut rows_h: Vec<DVector<f64>> = Vec::new();
    let mut rows_k: Vec<f64> = Vec::new();
    for i in 0..kept.len() {
        rows_h.push(lam_f.row(i).transpose());
        rows_k.push(lam_g[i]);
    }
    for j in 0..mc {
        if in_kept[j] {
            continue;
        }
        // G_j (z_f x + z_g) <= W_j + S_j x
        let gj = qp.g.row(j);
        let coeff = (gj * &z_f).transpose() - qp.s.row(j).transpose();
        let k = qp.w[j] - gj.dot(&z_g.transpose());
        rows_h.push(coeff);
        rows_k.push(k);
    }

    // normalize rows, drop vacuous ones
    let mut h_rows: Vec<DVector<f64>> = Vec::new();
    let mut k_vals: Vec<f64> = Vec::new();
    for (row, k) in rows_h.into_iter().zip(rows_k) {
        let norm = row.norm();
        if norm <= 1e-12 {
            // zero row: either trivially satisfied or numerically void
            continue;
        }
        h_rows.push(row / norm);
        k_vals.push(k / norm);
    }
    let r = h_rows.len();
    let mut h = DMatrix::zeros(r, n);
    let mut k = DVector::zeros(r);
    for (i, row) in h_rows.iter().enumerate() {
        h.set_row(i, &row.transpose());
        k[i] = k_vals[i];
    }

    let region_ok = {
        let resid = &h * x - &k;
        resid.iter().all(|vr| *vr <= opts.qp.tol_feas * 10.0)
    };
    if !region_ok {
        return Err(Error::DegenerateActiveSet(
            "generating state violates its own critical region".into(),
        ));
    }

    let lower_dimensional = !region_contains_ball(&h, &k, opts.interior_radius, &opts.qp)?;

    Ok((
        piece,
        CriticalRegion {
            h,
            k,
            active_set: kept,
            lower_dimensional,
        },
    ))
}

/// Greedy pivoted Gram-Schmidt on constraint normals in the H^{-1} metric:
/// keeps an independent subset, choosing the largest remaining residual
/// first and dropping dependent rows.
fn prune_dependent_rows(gram: &DMatrix<f64>, active: &[usize]) -> Vec<usize> {
    let q = active.len();
    if q == 0 {
        return Vec::new();
    }
    // residual norms^2 in the H^{-1} inner product
    let mut resid: Vec<f64> = active.iter().map(|&j| gram[(j, j)]).collect();
    let scale: Vec<f64> = resid.clone();
    // coefficients of orthogonalized directions
    let mut basis: Vec<Vec<f64>> = Vec::new(); // each: coefficients over "kept"
    let mut kept: Vec<usize> = Vec::new();
    let mut kept_pos: Vec<usize> = Vec::new(); // positions within `active`
    let mut used = vec![false; q];
    loop {
        let mut best = usize::MAX;
        let mut best_val = 0.0;
        for i in 0..q {
            if !used[i] && resid[i] > best_val {
                best_val = resid[i];
                best = i;
            }
        }
        if best == usize::MAX || best_val <= 1e-12 * scale[best].max(1e-300) {
            break;
        }
        used[best] = true;
        // orthogonalize remaining against the new direction via the Gram
        // matrix: the inner product of rows i and j is gram[(a_i, a_j)].
        // Maintain for each kept direction d_k = sum_t c_t n_t the
        // coefficient list c over active rows.
        let mut coeff = vec![0.0; q];
        coeff[best] = 1.0;
        // subtract projections on previous directions
        for (bi, b) in basis.iter().enumerate() {
            // <n_best, d_b> / <d_b, d_b>
            let mut ip = 0.0;
            for (t, ct) in b.iter().enumerate() {
                if *ct != 0.0 {
                    ip += ct * gram[(active[best], active[t])];
                }
            }
            let dd = kept_norm2(&basis, bi, gram, active);
            let factor = ip / dd;
            for (t, ct) in b.iter().enumerate() {
                coeff[t] -= factor * ct;
            }
        }
        basis.push(coeff);
        kept_pos.push(best);
        kept.push(active[best]);
        // update residuals of unused rows
        for i in 0..q {
            if used[i] {
                continue;
            }
            let b = basis.last().unwrap();
            let mut ip = 0.0;
            for (t, ct) in b.iter().enumerate() {
                if *ct != 0.0 {
                    ip += ct * gram[(active[i], active[t])];
                }
            }
            let dd = kept_norm2(&basis, basis.len() - 1, gram, active);
            resid[i] -= ip * ip / dd;
        }
    }
    // restore ascending constraint order for determinism
    let mut order: Vec<usize> = (0..kept.len()).collect();
    order.sort_by_key(|&i| kept[i]);
    order.into_iter().map(|i| kept[i]).collect()
}

fn kept_norm2(basis: &[Vec<f64>], bi: usize, gram: &DMatrix<f64>, active: &[usize]) -> f64 {
    let b = &basis[bi];
    let mut dd = 0.0;
    for (t1, c1) in b.iter().enumerate() {
        if *c1 == 0.0 {
            continue;
        }
        for (t2, c2) in b.iter().enumerate() {
            if *c2 != 0.0 {
                dd += c1 * c2 * gram[(active[t1], active[t2])];
            }
        }
    }
    dd.max(1e-300)
}

/// True when a ball of the given radius fits inside `H x <= K` (rows are
/// unit-normalized), probed with a minimum-norm QP on the shrunk region.
fn region_contains_ball(
    h: &DMatrix<f64>,
    k: &DVector<f64>,
    radius: f64,
    qp_opts: &QpOptions,
) -> Result<bool> {
    if h.nrows() == 0 {
        return Ok(true);
    }
    let n = h.ncols();
    let eye = DMatrix::identity(n, n);
    let shrunk = k.map(|v| v - radius);
    let sol = crate::linalg::solve_qp(&eye, h, &shrunk, qp_opts)?;
    Ok(sol.status == QpStatus::Optimal)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    UniformBox,
    Trajectory,
}

/// Draws feasible states for law recovery.
///
/// `UniformBox` rejection-samples the box; `Trajectory` rolls the
/// receding-horizon closed loop on the discrete linear model from random
/// feasible initial states and records every visited state. Both are
/// deterministic in the seed.
pub fn sample_states(
    qp: &MpQp,
    box_min: &DVector<f64>,
    box_max: &DVector<f64>,
    n_samples: usize,
    seed: u64,
    mode: SampleMode,
) -> Result<Vec<DVector<f64>>> {
    assert!(n_samples >= 1, "n_samples must be at least 1");
    if box_min.len() != qp.n || box_max.len() != qp.n {
        return Err(Error::DimensionMismatch {
            context: "sample_states box",
            expected: format!("{}", qp.n),
            got: format!("{}/{}", box_min.len(), box_max.len()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = QpOptions::default();
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(n_samples);
    let mut draws = 0usize;
    let mut accepted = 0usize;
    const MAX_DRAWS: usize = 1_000_000;

    let draw_feasible = |rng: &mut ChaCha8Rng,
                             draws: &mut usize,
                             accepted: &mut usize|
     -> Result<(DVector<f64>, crate::linalg::QpSolution)> {
        loop {
            *draws += 1;
            if *draws >= MAX_DRAWS && (*accepted as f64) < 0.001 * (*draws as f64) {
                return Err(Error::SamplingExhausted {
                    rate: *accepted as f64 / *draws as f64,
                    draws: *draws,
                });
            }
            let x = DVector::from_fn(qp.n, |i, _| rng.random_range(box_min[i]..=box_max[i]));
            let sol = qp.solve_at(&x, &opts, &[])?;
            if sol.status == QpStatus::Optimal {
                *accepted += 1;
                return Ok((x, sol));
            }
        }
    };

    match mode {
        SampleMode::UniformBox => {
            while out.len() < n_samples {
                let (x, _) = draw_feasible(&mut rng, &mut draws, &mut accepted)?;
                out.push(x);
            }
        }
        SampleMode::Trajectory => {
            // rollout length before reseeding; long enough to reach the
            // neighborhood of the origin for converging loops
            const ROLLOUT: usize = 400;
            while out.len() < n_samples {
                let (mut x, mut sol) = draw_feasible(&mut rng, &mut draws, &mut accepted)?;
                for _ in 0..ROLLOUT {
                    if out.len() >= n_samples {
                        break;
                    }
                    out.push(x.clone());
                    let useq = qp.input_sequence(&sol.z, &x);
                    let u = crate::mpc::first_input(&useq, qp.m)?;
                    x = &qp.model_a * &x + &qp.model_b * &u + &qp.model_c;
                    match qp.solve_at(&x, &opts, &sol.warm_set()) {
                        Ok(next) if next.status == QpStatus::Optimal => sol = next,
                        _ => break,
                    }
                }
            }
        }
    }
    Ok(out)
}

/// States visited by the receding-horizon closed loop on the discrete
/// linear model from a fixed initial state (warm-started solves); stops
/// early if the loop leaves the feasible set.
pub fn closed_loop_rollout(qp: &MpQp, x0: &DVector<f64>, steps: usize) -> Result<Vec<DVector<f64>>> {
    let opts = QpOptions::default();
    let mut out = Vec::with_capacity(steps);
    let mut warm: Vec<usize> = Vec::new();
    let mut x = x0.clone();
    for _ in 0..steps {
        let sol = qp.solve_at(&x, &opts, &warm)?;
        if sol.status != QpStatus::Optimal {
            break;
        }
        out.push(x.clone());
        let u = crate::mpc::first_input(&qp.input_sequence(&sol.z, &x), qp.m)?;
        x = &qp.model_a * &x + &qp.model_b * &u + &qp.model_c;
        warm = sol.warm_set();
    }
    Ok(out)
}

/// Removes near-duplicate pieces (first occurrence wins, order stable).
pub fn dedupe_pieces(pieces: &[AffinePiece]) -> Vec<AffinePiece> {
    dedupe_pieces_map(pieces).0
}

/// Same as [`dedupe_pieces`] but also returns, for each input piece, the
/// index of its representative in the deduped list.
pub fn dedupe_pieces_map(pieces: &[AffinePiece]) -> (Vec<AffinePiece>, Vec<usize>) {
    let mut unique: Vec<AffinePiece> = Vec::new();
    let mut map = Vec::with_capacity(pieces.len());
    for p in pieces {
        match unique.iter().position(|u| u.approx_eq(p, TOL_PIECE)) {
            Some(i) => map.push(i),
            None => {
                unique.push(p.clone());
                map.push(unique.len() - 1);
            }
        }
    }
    (unique, map)
}
