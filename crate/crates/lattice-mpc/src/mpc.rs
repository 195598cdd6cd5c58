//! Condensation of the discrete-time constrained MPC problem into a
//! parametric QP in the measured state.
//!
//! With stacked predictions `X = Sx x0 + Su U + Sc` the finite-horizon
//! cost becomes `1/2 U'HU + x'FU + c'U + const`; the change of variable
//! `z = U + H^{-1}(F'x + c)` removes the linear term, leaving
//!
//! ```text
//!     minimize   1/2 z'Hz
//!     subject to G z <= W + S x
//! ```
//!
//! whose KKT conditions yield the explicit control law piece by piece.

use crate::error::{Error, Result};
use crate::linalg::{self, DenseQp, QpOptions, QpSolution};
use nalgebra::{DMatrix, DVector};

/// The discrete-time constrained MPC problem data.
#[derive(Debug, Clone)]
pub struct MpcProblem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DVector<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub horizon: usize,
    pub x_min: DVector<f64>,
    pub x_max: DVector<f64>,
    pub u_min: DVector<f64>,
    pub u_max: DVector<f64>,
    /// Optional terminal polyhedron `H_f x_N <= k_f`; disabled by default.
    pub terminal_set: Option<(DMatrix<f64>, DVector<f64>)>,
}

impl MpcProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DVector<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        p: DMatrix<f64>,
        horizon: usize,
        x_min: DVector<f64>,
        x_max: DVector<f64>,
        u_min: DVector<f64>,
        u_max: DVector<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        if !a.is_square() || b.nrows() != n || c.len() != n {
            return Err(Error::DimensionMismatch {
                context: "MpcProblem model",
                expected: format!("A {n}x{n}, B {n}x{m}, C {n}"),
                got: format!(
                    "A {}x{}, B {}x{}, C {}",
                    a.nrows(),
                    a.ncols(),
                    b.nrows(),
                    b.ncols(),
                    c.len()
                ),
            });
        }
        if horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        linalg::check_spsd("MpcProblem Q", &q, 1e-9)?;
        linalg::check_spd("MpcProblem R", &r)?;
        linalg::check_spsd("MpcProblem P", &p, 1e-9)?;
        if q.nrows() != n || p.nrows() != n || r.nrows() != m {
            return Err(Error::DimensionMismatch {
                context: "MpcProblem weights",
                expected: format!("Q,P {n}x{n}, R {m}x{m}"),
                got: format!(
                    "Q {}x{}, P {}x{}, R {}x{}",
                    q.nrows(),
                    q.ncols(),
                    p.nrows(),
                    p.ncols(),
                    r.nrows(),
                    r.ncols()
                ),
            });
        }
        if x_min.len() != n || x_max.len() != n || u_min.len() != m || u_max.len() != m {
            return Err(Error::DimensionMismatch {
                context: "MpcProblem bounds",
                expected: format!("x bounds {n}, u bounds {m}"),
                got: format!(
                    "{}/{}/{}/{}",
                    x_min.len(),
                    x_max.len(),
                    u_min.len(),
                    u_max.len()
                ),
            });
        }
        for i in 0..n {
            if x_min[i] >= x_max[i] {
                return Err(Error::Config(format!("x_min[{i}] >= x_max[{i}]")));
            }
        }
        for i in 0..m {
            if u_min[i] >= u_max[i] {
                return Err(Error::Config(format!("u_min[{i}] >= u_max[{i}]")));
            }
        }
        Ok(MpcProblem {
            a,
            b,
            c,
            q,
            r,
            p,
            horizon,
            x_min,
            x_max,
            u_min,
            u_max,
            terminal_set: None,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }
}

/// Stacked prediction matrices over steps 1..N:
/// `X = Sx x0 + Su U + Sc`, block row i carrying `x_i`.
pub fn prediction_matrices(mp: &MpcProblem) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let n = mp.state_dim();
    let m = mp.input_dim();
    let nh = mp.horizon;
    let mut sx = DMatrix::zeros(nh * n, n);
    let mut su = DMatrix::zeros(nh * n, nh * m);
    let mut sc = DVector::zeros(nh * n);

    let mut a_pow = Vec::with_capacity(nh + 1);
    a_pow.push(DMatrix::identity(n, n));
    for i in 0..nh {
        let next = &mp.a * &a_pow[i];
        a_pow.push(next);
    }
    let mut c_acc = DVector::zeros(n);
    for i in 1..=nh {
        sx.view_mut(((i - 1) * n, 0), (n, n)).copy_from(&a_pow[i]);
        for j in 0..i {
            su.view_mut(((i - 1) * n, j * m), (n, m))
                .copy_from(&(&a_pow[i - 1 - j] * &mp.b));
        }
        c_acc = &a_pow[i - 1] * &mp.c + &c_acc;
        sc.rows_mut((i - 1) * n, n).copy_from(&c_acc);
    }
    (sx, su, sc)
}

/// The condensed parametric QP plus everything needed to map solutions
/// back to input sequences and to evaluate the optimal cost.
pub struct MpQp {
    pub h: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub w: DVector<f64>,
    pub s: DMatrix<f64>,
    /// `U = z - (E x + e0)`
    pub back_e: DMatrix<f64>,
    pub back_e0: DVector<f64>,
    pub n: usize,
    pub m: usize,
    pub horizon: usize,
    pub model_a: DMatrix<f64>,
    pub model_b: DMatrix<f64>,
    pub model_c: DVector<f64>,
    pub u_min: DVector<f64>,
    pub u_max: DVector<f64>,
    /// Stage weights kept for running-cost evaluation.
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    cost_xx: DMatrix<f64>,
    cost_xc: DVector<f64>,
    cost_cc: f64,
    engine: DenseQp,
}

impl MpQp {
    pub fn constraint_count(&self) -> usize {
        self.g.nrows()
    }

    /// Right-hand side of the constraint system at state `x`.
    pub fn rhs_at(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.w + &self.s * x
    }

    pub fn engine(&self) -> &DenseQp {
        &self.engine
    }

    /// Solves the QP at state `x`, optionally warm-started.
    pub fn solve_at(
        &self,
        x: &DVector<f64>,
        opts: &QpOptions,
        warm: &[usize],
    ) -> Result<QpSolution> {
        self.engine.solve_warm(&self.rhs_at(x), opts, warm)
    }

    /// Maps an optimizer `z` back to the stacked input sequence.
    pub fn input_sequence(&self, z: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        z - (&self.back_e * x + &self.back_e0)
    }

    /// Optimal cost of the original MPC objective at `x` given the
    /// optimizer `z` (the stage cost of the measured state is included).
    pub fn optimal_cost(&self, z: &DVector<f64>, x: &DVector<f64>) -> f64 {
        let d = &self.back_e * x + &self.back_e0;
        let quad = 0.5 * (z.transpose() * &self.h * z)[(0, 0)];
        let shift = 0.5 * (d.transpose() * &self.h * &d)[(0, 0)];
        let xterm = (x.transpose() * &self.cost_xx * x)[(0, 0)];
        let cross = 2.0 * x.dot(&self.cost_xc);
        quad - shift + xterm + cross + self.cost_cc
    }

    /// Stage cost l(x, u) = x'Qx + u'Ru.
    pub fn stage_cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        (x.transpose() * &self.q * x)[(0, 0)] + (u.transpose() * &self.r * u)[(0, 0)]
    }
}

/// Builds the condensed QP. Constraint rows are ordered
/// `[u upper; u lower; x upper; x lower; terminal]`, with the state
/// constrained over steps 1..N (the measured state cannot be constrained).
pub fn condense(mp: &MpcProblem) -> Result<MpQp> {
    let n = mp.state_dim();
    let m = mp.input_dim();
    let nh = mp.horizon;
    let nu = nh * m;
    let (sx, su, sc) = prediction_matrices(mp);

    let mut qbar = DMatrix::zeros(nh * n, nh * n);
    for i in 0..nh - 1 {
        qbar.view_mut((i * n, i * n), (n, n)).copy_from(&mp.q);
    }
    qbar.view_mut(((nh - 1) * n, (nh - 1) * n), (n, n))
        .copy_from(&mp.p);
    let mut rbar = DMatrix::zeros(nu, nu);
    for i in 0..nh {
        rbar.view_mut((i * m, i * m), (m, m)).copy_from(&mp.r);
    }

    let su_t_qbar = su.transpose() * &qbar;
    let h = {
        let h = 2.0 * (&su_t_qbar * &su + &rbar);
        (&h + h.transpose()) * 0.5
    };
    let f = 2.0 * sx.transpose() * &qbar * &su; // cost term x' F U
    let c_lin = 2.0 * &su_t_qbar * &sc; // cost term c' U

    let h_chol = nalgebra::Cholesky::new(h.clone()).ok_or(Error::NotSpd {
        context: "condense H",
    })?;
    let back_e = h_chol.solve(&f.transpose());
    let back_e0 = h_chol.solve(&c_lin);

    let mut rows = 2 * nu + 2 * nh * n;
    if let Some((hf, _)) = &mp.terminal_set {
        rows += hf.nrows();
    }
    let mut g = DMatrix::zeros(rows, nu);
    let mut w = DVector::zeros(rows);
    let mut s = DMatrix::zeros(rows, n);

    let u_max_stack = DVector::from_fn(nu, |i, _| mp.u_max[i % m]);
    let u_min_stack = DVector::from_fn(nu, |i, _| mp.u_min[i % m]);
    let x_max_stack = DVector::from_fn(nh * n, |i, _| mp.x_max[i % n]);
    let x_min_stack = DVector::from_fn(nh * n, |i, _| mp.x_min[i % n]);

    // u <= u_max:  z <= u_max + e0 + E x
    g.view_mut((0, 0), (nu, nu))
        .copy_from(&DMatrix::identity(nu, nu));
    w.rows_mut(0, nu).copy_from(&(&u_max_stack + &back_e0));
    s.view_mut((0, 0), (nu, n)).copy_from(&back_e);
    // -u <= -u_min: -z <= -u_min - e0 - E x
    g.view_mut((nu, 0), (nu, nu))
        .copy_from(&(-DMatrix::identity(nu, nu)));
    w.rows_mut(nu, nu).copy_from(&(-&u_min_stack - &back_e0));
    s.view_mut((nu, 0), (nu, n)).copy_from(&(-&back_e));
    // X <= x_max: Su z <= x_max - Sc + Su e0 + (Su E - Sx) x
    let su_e = &su * &back_e;
    let su_e0 = &su * &back_e0;
    g.view_mut((2 * nu, 0), (nh * n, nu)).copy_from(&su);
    w.rows_mut(2 * nu, nh * n)
        .copy_from(&(&x_max_stack - &sc + &su_e0));
    s.view_mut((2 * nu, 0), (nh * n, n))
        .copy_from(&(&su_e - &sx));
    // -X <= -x_min
    g.view_mut((2 * nu + nh * n, 0), (nh * n, nu))
        .copy_from(&(-&su));
    w.rows_mut(2 * nu + nh * n, nh * n)
        .copy_from(&(&sc - &x_min_stack - &su_e0));
    s.view_mut((2 * nu + nh * n, 0), (nh * n, n))
        .copy_from(&(&sx - &su_e));
    // terminal polyhedron on x_N
    if let Some((hf, kf)) = &mp.terminal_set {
        let base = 2 * nu + 2 * nh * n;
        let sx_n = sx.view(((nh - 1) * n, 0), (n, n)).clone_owned();
        let su_n = su.view(((nh - 1) * n, 0), (n, nu)).clone_owned();
        let sc_n = sc.rows((nh - 1) * n, n).clone_owned();
        let gt = hf * &su_n;
        g.view_mut((base, 0), (hf.nrows(), nu)).copy_from(&gt);
        w.rows_mut(base, hf.nrows())
            .copy_from(&(kf - hf * &sc_n + &gt * &back_e0));
        s.view_mut((base, 0), (hf.nrows(), n))
            .copy_from(&(&gt * &back_e - hf * sx_n));
    }

    // J*(x) pieces that do not depend on z
    let cost_xx = &mp.q + sx.transpose() * &qbar * &sx;
    let cost_xc = sx.transpose() * &qbar * &sc;
    let cost_cc = (sc.transpose() * &qbar * &sc)[(0, 0)];

    let engine = DenseQp::new(h.clone(), g.clone())?;
    Ok(MpQp {
        h,
        g,
        w,
        s,
        back_e,
        back_e0,
        n,
        m,
        horizon: nh,
        model_a: mp.a.clone(),
        model_b: mp.b.clone(),
        model_c: mp.c.clone(),
        u_min: mp.u_min.clone(),
        u_max: mp.u_max.clone(),
        q: mp.q.clone(),
        r: mp.r.clone(),
        cost_xx,
        cost_xc,
        cost_cc,
        engine,
    })
}

/// First m entries of a stacked input sequence.
pub fn first_input(u_seq: &DVector<f64>, m: usize) -> Result<DVector<f64>> {
    if u_seq.len() < m || u_seq.len() % m != 0 {
        return Err(Error::DimensionMismatch {
            context: "first_input",
            expected: format!("multiple of {m}"),
            got: format!("{}", u_seq.len()),
        });
    }
    Ok(u_seq.rows(0, m).clone_owned())
}
