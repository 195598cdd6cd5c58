//! Discrete algebraic Riccati equation and LQR gain synthesis.

use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix};

/// Solves `P = A'PA - A'PB (R + B'PB)^{-1} B'PA + Q` with the
/// structure-preserving doubling iteration. Converges quadratically for
/// stabilizable (A, B); non-convergence is reported rather than guessed.
pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n || q.nrows() != n || !q.is_square() {
        return Err(Error::DimensionMismatch {
            context: "solve_dare",
            expected: format!("A {n}x{n}, B {n}xm, Q {n}x{n}"),
            got: format!(
                "A {}x{}, B {}x{}, Q {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                q.nrows(),
                q.ncols()
            ),
        });
    }
    super::check_spsd("solve_dare Q", q, 1e-9)?;
    super::check_spd("solve_dare R", r)?;

    let r_chol = Cholesky::new(r.clone()).ok_or(Error::NotSpd {
        context: "solve_dare R",
    })?;
    let mut ak = a.clone();
    let mut gk = b * r_chol.solve(&b.transpose());
    let mut pk = q.clone();
    let eye = DMatrix::identity(n, n);
    let max_iter = 120;

    let mut converged = false;
    for _ in 0..max_iter {
        let w = &eye + &gk * &pk;
        let w_lu = w.lu();
        let wi_ak = w_lu
            .solve(&ak)
            .ok_or(Error::NoConvergence {
                iters: max_iter,
                residual: f64::NAN,
            })?;
        let wi_gk = w_lu.solve(&gk).ok_or(Error::NoConvergence {
            iters: max_iter,
            residual: f64::NAN,
        })?;
        let a_next = &ak * &wi_ak;
        let g_next = &gk + &ak * wi_gk * ak.transpose();
        let p_next = &pk + ak.transpose() * &pk * wi_ak;
        let g_next = (&g_next + g_next.transpose()) * 0.5;
        let p_next = (&p_next + p_next.transpose()) * 0.5;

        let delta = super::inf_norm_mat(&(&p_next - &pk));
        let scale = super::inf_norm_mat(&pk).max(1.0);
        ak = a_next;
        gk = g_next;
        pk = p_next;
        if delta <= 1e-14 * scale {
            converged = true;
            break;
        }
    }

    let residual = dare_residual(a, b, q, r, &pk);
    let bound = 1e-8 * super::inf_norm_mat(&pk).max(1.0);
    if !converged || residual > bound {
        return Err(Error::NoConvergence {
            iters: max_iter,
            residual,
        });
    }
    Ok(pk)
}

/// `|A'PA - P - A'PB(R+B'PB)^{-1}B'PA + Q|_inf`
pub fn dare_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> f64 {
    let btpb = r + b.transpose() * p * b;
    let btpa = b.transpose() * p * a;
    let inner = btpb.lu().solve(&btpa).expect("R + B'PB singular");
    let res = a.transpose() * p * a - p - a.transpose() * p * b * inner + q;
    super::inf_norm_mat(&res)
}

/// `K = (R + B'PB)^{-1} B'PA` with P from [`solve_dare`]; the closed loop
/// `A - BK` is checked Schur-stable.
pub fn lqr_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let p = solve_dare(a, b, q, r)?;
    let btpb = r + b.transpose() * &p * b;
    let btpa = b.transpose() * &p * a;
    let k = btpb.lu().solve(&btpa).ok_or(Error::NotSpd {
        context: "lqr_gain R + B'PB",
    })?;
    let rho = super::spectral_radius(&(a - b * &k));
    if rho >= 1.0 {
        return Err(Error::NoConvergence {
            iters: 0,
            residual: rho,
        });
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn deadbeat_gives_q() {
        let a = DMatrix::zeros(3, 3);
        let b = DMatrix::identity(3, 3);
        let q = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0]));
        let r = DMatrix::identity(3, 3);
        let p = solve_dare(&a, &b, &q, &r).unwrap();
        assert_abs_diff_eq!((&p - &q).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn scalar_fixed_point() {
        // p = a^2 p - a^2 p^2 / (r + p) + q reduces to
        // p^2 - 0.25 p - 1 = 0 for a = 0.5, b = q = r = 1; frozen value
        // below computed by iterating that map to 1e-12.
        let a = DMatrix::from_element(1, 1, 0.5);
        let b = DMatrix::from_element(1, 1, 1.0);
        let q = DMatrix::from_element(1, 1, 1.0);
        let r = DMatrix::from_element(1, 1, 1.0);

        let mut p_oracle = 1.0f64;
        loop {
            let next = 0.25 * p_oracle - 0.25 * p_oracle * p_oracle / (1.0 + p_oracle) + 1.0;
            if (next - p_oracle).abs() < 1e-13 {
                p_oracle = next;
                break;
            }
            p_oracle = next;
        }
        assert_abs_diff_eq!(p_oracle, 1.132_782_218_537_318_6, epsilon = 1e-11);

        let p = solve_dare(&a, &b, &q, &r).unwrap();
        assert_abs_diff_eq!(p[(0, 0)], p_oracle, epsilon = 1e-11);

        let k = lqr_gain(&a, &b, &q, &r).unwrap();
        let k_oracle = 0.5 * p_oracle / (1.0 + p_oracle);
        assert_abs_diff_eq!(k[(0, 0)], k_oracle, epsilon = 1e-11);
        assert_abs_diff_eq!(k_oracle, 0.265_564_437_074_637_4, epsilon = 1e-11);
    }

    #[test]
    fn random_stabilizable_pairs() {
        let mut rng = StdRng::seed_from_u64(11);
        let mut done = 0;
        while done < 100 {
            let n = rng.random_range(1..=6);
            let m = rng.random_range(1..=n);
            // contraction plus full-rank input keeps (A, B) stabilizable
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)) * 0.9;
            let b = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
            let q = {
                let c = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
                &c * c.transpose() + DMatrix::identity(n, n) * 0.1
            };
            let r = DMatrix::identity(m, m);
            let p = solve_dare(&a, &b, &q, &r).unwrap();
            let res = dare_residual(&a, &b, &q, &r, &p);
            assert!(
                res <= 1e-8 * crate::linalg::inf_norm_mat(&p).max(1.0),
                "residual {res}"
            );
            let k = lqr_gain(&a, &b, &q, &r).unwrap();
            assert!(crate::linalg::spectral_radius(&(&a - &b * &k)) < 1.0);
            done += 1;
        }
    }
}
