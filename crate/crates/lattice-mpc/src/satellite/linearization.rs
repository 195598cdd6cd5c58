//! Jacobian linearization (central finite differences) and exact
//! zero-order-hold discretization via the augmented matrix exponential.

use super::{dynamics_vec, AttitudeState, SatelliteParams};
use crate::error::Result;
use nalgebra::{DMatrix, DVector};

/// Continuous and discrete linear models around a fixed point.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub a_c: DMatrix<f64>,
    pub b_c: DMatrix<f64>,
    pub c_c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DVector<f64>,
    pub ts: f64,
}

impl LinearModel {
    pub fn from_params(
        p: &SatelliteParams,
        x_s: &AttitudeState,
        u_s: &DVector<f64>,
        ts: f64,
    ) -> Result<Self> {
        let (a_c, b_c, c_c) = linearize(p, x_s, u_s)?;
        let (a, b, c) = discretize(&a_c, &b_c, &c_c, ts)?;
        Ok(LinearModel {
            a_c,
            b_c,
            c_c,
            a,
            b,
            c,
            ts,
        })
    }
}

/// First-order Taylor expansion of the dynamics at `(x_s, u_s)` by central
/// finite differences with per-component step `1e-6 * (1 + |v|)`:
/// `x_dot ~= A_c x + B_c u + C_c` with `C_c = f(x_s,u_s) - A_c x_s - B_c u_s`.
pub fn linearize(
    p: &SatelliteParams,
    x_s: &AttitudeState,
    u_s: &DVector<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)> {
    let xs = x_s.as_vector();
    let n = xs.len();
    let m = u_s.len();
    let mut a_c = DMatrix::zeros(n, n);
    let mut b_c = DMatrix::zeros(n, m);
    for j in 0..n {
        let h = 1e-6 * (1.0 + xs[j].abs());
        let mut xp = xs.clone();
        let mut xm = xs.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (dynamics_vec(&xp, u_s, p)? - dynamics_vec(&xm, u_s, p)?) / (2.0 * h);
        a_c.set_column(j, &col);
    }
    for j in 0..m {
        let h = 1e-6 * (1.0 + u_s[j].abs());
        let mut up = u_s.clone();
        let mut um = u_s.clone();
        up[j] += h;
        um[j] -= h;
        let col = (dynamics_vec(&xs, &up, p)? - dynamics_vec(&xs, &um, p)?) / (2.0 * h);
        b_c.set_column(j, &col);
    }
    let c_c = dynamics_vec(&xs, u_s, p)? - &a_c * &xs - &b_c * u_s;
    Ok((a_c, b_c, c_c))
}

/// Exact zero-order-hold discretization:
/// `A = exp(A_c Ts)`, `B = int_0^Ts exp(A_c s) ds B_c`, same integral for
/// `C`, all read off one augmented matrix exponential.
pub fn discretize(
    a_c: &DMatrix<f64>,
    b_c: &DMatrix<f64>,
    c_c: &DVector<f64>,
    ts: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)> {
    assert!(ts > 0.0, "sampling interval must be positive");
    let n = a_c.nrows();
    let m = b_c.ncols();
    let mut aug = DMatrix::zeros(n + m + 1, n + m + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(a_c);
    aug.view_mut((0, n), (n, m)).copy_from(b_c);
    aug.view_mut((0, n + m), (n, 1)).copy_from(c_c);
    let e = (aug * ts).exp();
    let a = e.view((0, 0), (n, n)).clone_owned();
    let b = e.view((0, n), (n, m)).clone_owned();
    let c = DVector::from_fn(n, |i, _| e[(i, n + m)]);
    crate::linalg::check_finite_mat("discretize A", &a)?;
    Ok((a, b, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{Matrix3xX, Vector3};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn demo_params() -> SatelliteParams {
        SatelliteParams::new(
            nalgebra::Matrix3::from_diagonal(&Vector3::new(4.250, 4.334, 3.664)),
            DVector::from_vec(vec![4e-5]),
            Matrix3xX::from_column_slice(&[0.0, 1.0, 0.0]),
            1.1363e-3,
            Vector3::new(0.0484, 0.0484, 0.0398),
            0.0020,
            527.0,
        )
        .unwrap()
    }

    #[test]
    fn affine_term_vanishes_at_equilibrium() {
        let p = demo_params();
        let (_, _, c_c) = linearize(&p, &AttitudeState::zero(1), &DVector::zeros(4)).unwrap();
        assert!(crate::linalg::inf_norm_vec(&c_c) <= 1e-8);
    }

    #[test]
    fn input_jacobian_is_analytic() {
        // Inputs enter linearly, so central differences recover the exact
        // columns [J^{-1}; -Lambda' J^{-1}; 0] for the thruster torques.
        let p = demo_params();
        let (_, b_c, _) = linearize(&p, &AttitudeState::zero(1), &DVector::zeros(4)).unwrap();
        for j in 0..3 {
            let mut e = Vector3::zeros();
            e[j] = 1.0;
            let top = p.j_inverse() * e;
            for i in 0..3 {
                assert_abs_diff_eq!(b_c[(i, j)], top[i], epsilon = 1e-9);
            }
            let wheel = -p.wheel_axes().column(0).dot(&top);
            assert_abs_diff_eq!(b_c[(3, j)], wheel, epsilon = 1e-9);
            for i in 4..7 {
                assert_abs_diff_eq!(b_c[(i, j)], 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn kinematics_rows_at_identity() {
        let p = demo_params();
        let (a_c, _, _) = linearize(&p, &AttitudeState::zero(1), &DVector::zeros(4)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 0.5 } else { 0.0 };
                assert_abs_diff_eq!(a_c[(4 + i, j)], expect, epsilon = 1e-9);
            }
        }
    }

    /// Second, independent forward-difference evaluation agrees with the
    /// central-difference Jacobians near the origin.
    #[test]
    fn jacobian_cross_check_forward_differences() {
        let p = demo_params();
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..100 {
            let xs = DVector::from_fn(7, |i, _| {
                if i == 3 {
                    rng.random_range(-50.0..50.0)
                } else {
                    rng.random_range(-0.05..0.05)
                }
            });
            let us = DVector::from_fn(4, |_, _| rng.random_range(-0.01..0.01));
            let x_state = AttitudeState::from_vector(&xs, 1).unwrap();
            let (a_c, _, _) = linearize(&p, &x_state, &us).unwrap();
            let f0 = dynamics_vec(&xs, &us, &p).unwrap();
            for j in 0..7 {
                let h = 1e-7 * (1.0 + xs[j].abs());
                let mut xp = xs.clone();
                xp[j] += h;
                let col = (dynamics_vec(&xp, &us, &p).unwrap() - &f0) / h;
                for i in 0..7 {
                    let scale = a_c[(i, j)].abs().max(1.0);
                    assert!(
                        (a_c[(i, j)] - col[i]).abs() <= 1e-5 * scale,
                        "A_c[{i},{j}] mismatch: {} vs {}",
                        a_c[(i, j)],
                        col[i]
                    );
                }
            }
        }
    }

    #[test]
    fn zoh_trivial_and_scalar() {
        let a_c = DMatrix::zeros(2, 2);
        let b_c = DMatrix::identity(2, 2);
        let c_c = DVector::zeros(2);
        let (a, b, c) = discretize(&a_c, &b_c, &c_c, 0.1).unwrap();
        assert_abs_diff_eq!(a, DMatrix::identity(2, 2), epsilon = 1e-15);
        assert_abs_diff_eq!(b, DMatrix::identity(2, 2) * 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(c, DVector::zeros(2), epsilon = 0.0);

        let a_c = DMatrix::from_element(1, 1, -1.0);
        let b_c = DMatrix::from_element(1, 1, 1.0);
        let c_c = DVector::zeros(1);
        let (a, b, _) = discretize(&a_c, &b_c, &c_c, 0.1).unwrap();
        assert_abs_diff_eq!(a[(0, 0)], (-0.1f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(b[(0, 0)], 1.0 - (-0.1f64).exp(), epsilon = 1e-12);
    }

    /// Linear-system RK4 with a tiny substep is the oracle for the matrix
    /// exponential route.
    fn rk4_linear_step(
        a_c: &DMatrix<f64>,
        b_c: &DMatrix<f64>,
        c_c: &DVector<f64>,
        x0: &DVector<f64>,
        u: &DVector<f64>,
        ts: f64,
        sub: usize,
    ) -> DVector<f64> {
        let h = ts / sub as f64;
        let f = |x: &DVector<f64>| a_c * x + b_c * u + c_c;
        let mut x = x0.clone();
        for _ in 0..sub {
            let k1 = f(&x);
            let k2 = f(&(&x + &k1 * (h / 2.0)));
            let k3 = f(&(&x + &k2 * (h / 2.0)));
            let k4 = f(&(&x + &k3 * h));
            x += (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (h / 6.0);
        }
        x
    }

    #[test]
    fn zoh_matches_fine_integration_on_satellite_model() {
        let p = demo_params();
        let (a_c, b_c, c_c) = linearize(&p, &AttitudeState::zero(1), &DVector::zeros(4)).unwrap();
        let (a, b, c) = discretize(&a_c, &b_c, &c_c, 0.1).unwrap();
        let x0 = DVector::from_vec(vec![0.01, -0.02, 0.03, 10.0, 0.05, -0.04, 0.02]);
        let u = DVector::from_vec(vec![0.01, -0.02, 0.015, 0.001]);
        let exact = &a * &x0 + &b * &u + &c;
        let fine = rk4_linear_step(&a_c, &b_c, &c_c, &x0, &u, 0.1, 100);
        assert!((exact - fine).norm() <= 1e-6);
    }

    #[test]
    fn zoh_matches_fine_integration_random_stable() {
        let mut rng = StdRng::seed_from_u64(9);
        for _ in 0..20 {
            let n = rng.random_range(1..=7);
            let m = rng.random_range(1..=3);
            let raw = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let a_c = raw - DMatrix::identity(n, n) * 1.5;
            let b_c = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
            let c_c = DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5));
            let (a, b, c) = discretize(&a_c, &b_c, &c_c, 0.1).unwrap();
            let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let u = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
            let exact = &a * &x0 + &b * &u + &c;
            let fine = rk4_linear_step(&a_c, &b_c, &c_c, &x0, &u, 0.1, 100);
            assert!((exact - fine).norm() <= 1e-6);
        }
    }
}
