//! Euler-parameter (unit quaternion) attitude machinery.
//!
//! `rotation_from_euler_params` returns the active rotation matrix
//! `R = 1 + 2 eta eps^x + 2 eps^x eps^x`; for an attitude quaternion of
//! the body relative to the orbital frame it maps body components to
//! orbital components, so the orbit-to-body transform used by the
//! dynamics is its transpose.

use crate::error::{Error, Result};
use nalgebra::{Matrix3, Vector3};

/// Cross-product matrix: `skew(v) * w = v x w`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub fn rotation_from_euler_params(eta: f64, eps: &Vector3<f64>) -> Result<Matrix3<f64>> {
    let norm2 = eta * eta + eps.norm_squared();
    if (norm2 - 1.0).abs() > 1e-9 {
        return Err(Error::NotUnitQuaternion(norm2));
    }
    let e = skew(eps);
    Ok(Matrix3::identity() + 2.0 * eta * e + 2.0 * e * e)
}

fn quat_mul(a: (f64, Vector3<f64>), b: (f64, Vector3<f64>)) -> (f64, Vector3<f64>) {
    let (w1, v1) = a;
    let (w2, v2) = b;
    (w1 * w2 - v1.dot(&v2), w1 * v2 + w2 * v1 + v1.cross(&v2))
}

/// 3-2-1 (yaw-pitch-roll) body sequence to Euler parameters, nonnegative
/// eta branch.
pub fn euler_to_eps(phi: f64, theta: f64, psi: f64) -> (f64, Vector3<f64>) {
    let qx = ((phi / 2.0).cos(), Vector3::new((phi / 2.0).sin(), 0.0, 0.0));
    let qy = ((theta / 2.0).cos(), Vector3::new(0.0, (theta / 2.0).sin(), 0.0));
    let qz = ((psi / 2.0).cos(), Vector3::new(0.0, 0.0, (psi / 2.0).sin()));
    let (eta, eps) = quat_mul(quat_mul(qz, qy), qx);
    if eta < 0.0 {
        (-eta, -eps)
    } else {
        (eta, eps)
    }
}

/// Inverse of [`euler_to_eps`] away from the theta = +-90 deg gimbal lock.
pub fn eps_to_euler(eta: f64, eps: &Vector3<f64>) -> Result<(f64, f64, f64)> {
    let r_bo = rotation_from_euler_params(eta, eps)?.transpose();
    let theta = (-r_bo[(0, 2)]).clamp(-1.0, 1.0).asin();
    let phi = r_bo[(1, 2)].atan2(r_bo[(2, 2)]);
    let psi = r_bo[(0, 1)].atan2(r_bo[(0, 0)]);
    Ok((phi, theta, psi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_unit_quat(rng: &mut StdRng) -> (f64, Vector3<f64>) {
        loop {
            let q = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            let n = q.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
            if n > 1e-3 {
                let (eta, eps) = (q[0] / n, Vector3::new(q[1] / n, q[2] / n, q[3] / n));
                return if eta < 0.0 { (-eta, -eps) } else { (eta, eps) };
            }
        }
    }

    #[test]
    fn skew_basics() {
        assert_eq!(skew(&Vector3::zeros()), Matrix3::zeros());
        let e3 = skew(&Vector3::x()) * Vector3::y();
        assert_eq!(e3, Vector3::z());
        let mut rng = StdRng::seed_from_u64(1);
        for _ in 0..100 {
            let v = Vector3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            let w = Vector3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            assert_abs_diff_eq!(skew(&v) * w, v.cross(&w), epsilon = 1e-14);
            assert_abs_diff_eq!(skew(&v).transpose(), -skew(&v), epsilon = 0.0);
        }
    }

    #[test]
    fn rotation_identity_and_half_turn() {
        let r = rotation_from_euler_params(1.0, &Vector3::zeros()).unwrap();
        assert_abs_diff_eq!(r, Matrix3::identity(), epsilon = 0.0);
        let r = rotation_from_euler_params(0.0, &Vector3::x()).unwrap();
        assert_abs_diff_eq!(
            r,
            Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0)),
            epsilon = 1e-15
        );
        assert!(rotation_from_euler_params(1.0, &Vector3::x()).is_err());
    }

    #[test]
    fn rotation_matches_axis_angle_oracle() {
        let mut rng = StdRng::seed_from_u64(2);
        for _ in 0..1000 {
            let (eta, eps) = random_unit_quat(&mut rng);
            let r = rotation_from_euler_params(eta, &eps).unwrap();
            // Rodrigues from theta = 2 acos(eta) about eps/|eps|
            let theta = 2.0 * eta.clamp(-1.0, 1.0).acos();
            let oracle = if eps.norm() < 1e-12 {
                Matrix3::identity()
            } else {
                let k = skew(&(eps / eps.norm()));
                Matrix3::identity() + theta.sin() * k + (1.0 - theta.cos()) * (k * k)
            };
            assert_abs_diff_eq!(r, oracle, epsilon = 1e-9);
        }
    }

    #[test]
    fn rotation_orthonormality_bulk() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..10_000 {
            let (eta, eps) = random_unit_quat(&mut rng);
            let r = rotation_from_euler_params(eta, &eps).unwrap();
            assert_abs_diff_eq!(r.transpose() * r, Matrix3::identity(), epsilon = 1e-9);
            assert_abs_diff_eq!(r.determinant(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn euler_conversion_endpoints() {
        let (eta, eps) = euler_to_eps(0.0, 0.0, 0.0);
        assert_abs_diff_eq!(eta, 1.0, epsilon = 0.0);
        assert_abs_diff_eq!(eps, Vector3::zeros(), epsilon = 0.0);
        let (eta, eps) = euler_to_eps(std::f64::consts::PI, 0.0, 0.0);
        assert_abs_diff_eq!(eta, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(eps, Vector3::x(), epsilon = 1e-15);
    }

    /// Independent oracle: compose the three coordinate-transform
    /// matrices directly and extract the quaternion from the matrix.
    #[test]
    fn euler_matches_rotation_matrix_oracle() {
        fn cx(a: f64) -> Matrix3<f64> {
            Matrix3::new(1., 0., 0., 0., a.cos(), a.sin(), 0., -a.sin(), a.cos())
        }
        fn cy(a: f64) -> Matrix3<f64> {
            Matrix3::new(a.cos(), 0., -a.sin(), 0., 1., 0., a.sin(), 0., a.cos())
        }
        fn cz(a: f64) -> Matrix3<f64> {
            Matrix3::new(a.cos(), a.sin(), 0., -a.sin(), a.cos(), 0., 0., 0., 1.)
        }
        let d2r = std::f64::consts::PI / 180.0;
        for (phi, theta, psi) in [
            (-25.0 * d2r, 60.0 * d2r, 90.0 * d2r),
            (10.0 * d2r, -40.0 * d2r, 5.0 * d2r),
            (0.3, 0.2, -1.2),
        ] {
            let (eta, eps) = euler_to_eps(phi, theta, psi);
            let r_bo = cx(phi) * cy(theta) * cz(psi);
            let r = rotation_from_euler_params(eta, &eps).unwrap();
            assert_abs_diff_eq!(r.transpose(), r_bo, epsilon = 1e-12);
            let (p2, t2, s2) = eps_to_euler(eta, &eps).unwrap();
            assert_abs_diff_eq!(p2, phi, epsilon = 1e-9);
            assert_abs_diff_eq!(t2, theta, epsilon = 1e-9);
            assert_abs_diff_eq!(s2, psi, epsilon = 1e-9);
        }
    }
}
