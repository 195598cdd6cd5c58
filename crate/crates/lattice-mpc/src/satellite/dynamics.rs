//! Nonlinear state derivative and the RK4 integrator used as the
//! simulation plant.

use super::attitude::{rotation_from_euler_params, skew};
use super::{AttitudeState, SatelliteParams};
use crate::error::{Error, Result};
use nalgebra::{DVector, Matrix3, Vector3};

/// Body rate relative to the inertial frame: `w_ib = w_ob - w0 c2`.
pub(super) fn inertial_rate(x: &AttitudeState, p: &SatelliteParams) -> Result<Vector3<f64>> {
    let eta = x.eta()?;
    let r_bo = rotation_from_euler_params(eta, &x.eps)
        .map_err(|_| Error::EpsOutOfRange(x.eps.norm()))?
        .transpose();
    Ok(x.omega_ob - p.orbital_rate() * r_bo.column(1))
}

/// State derivative of the full nonlinear model.
///
/// The input is `u = [tau, tau_w]`: external thruster torque plus
/// internal axial wheel torques. Euler's equation is written in the
/// orbital-relative rate; gravity-gradient torque and the transport term
/// from the rotating orbital frame appear explicitly.
pub fn dynamics(x: &AttitudeState, u: &DVector<f64>, p: &SatelliteParams) -> Result<DVector<f64>> {
    let l = p.wheel_count();
    if u.len() != 3 + l {
        return Err(Error::DimensionMismatch {
            context: "dynamics input",
            expected: format!("{}", 3 + l),
            got: format!("{}", u.len()),
        });
    }
    let e2 = x.eps.norm_squared();
    if e2 > 1.0 + 2e-9 {
        return Err(Error::EpsOutOfRange(e2.sqrt()));
    }
    let eta = (1.0 - e2).max(0.0).sqrt();
    // R^b_o maps orbital components into body components
    let r_bo = rotation_from_euler_params(eta, &x.eps)
        .expect("eta recomputed from eps is consistent")
        .transpose();
    let c2: Vector3<f64> = r_bo.column(1).into();
    let c3: Vector3<f64> = r_bo.column(2).into();
    let w0 = p.orbital_rate();

    let tau = Vector3::new(u[0], u[1], u[2]);
    let tau_w = DVector::from_fn(l, |i, _| u[3 + i]);

    let w_ib = x.omega_ob - w0 * c2;
    // h = I w_ib + Lambda I_w w_w (wheel relative-momentum part)
    let mut mom = p.inertia() * w_ib;
    for c in 0..l {
        mom += p.wheel_axes().column(c) * (p.wheel_inertia()[c] * x.omega_w[c]);
    }
    let gyro = -w_ib.cross(&mom);
    let tau_gg = 3.0 * w0 * w0 * c3.cross(&(p.inertia() * c3));
    let mut lam_tau_w = Vector3::zeros();
    for c in 0..l {
        lam_tau_w += p.wheel_axes().column(c) * tau_w[c];
    }
    // Euler equation solved for the inertial-rate derivative
    let dw_ib = p.j_inverse() * (gyro + tau + tau_gg - lam_tau_w);
    // transport term: c2 rotates with -w_ob^x in body coordinates
    let dw_ob = dw_ib + w0 * (-x.omega_ob.cross(&c2));
    // wheel momentum h_w integrates the axial torque directly
    let mut dw_w = DVector::zeros(l);
    for c in 0..l {
        dw_w[c] = tau_w[c] / p.wheel_inertia()[c] - p.wheel_axes().column(c).dot(&dw_ib);
    }
    let deps = 0.5 * (eta * Matrix3::identity() + skew(&x.eps)) * x.omega_ob;

    let mut dx = DVector::zeros(6 + l);
    for i in 0..3 {
        dx[i] = dw_ob[i];
    }
    for i in 0..l {
        dx[3 + i] = dw_w[i];
    }
    for i in 0..3 {
        dx[3 + l + i] = deps[i];
    }
    Ok(dx)
}

/// [`dynamics`] over flat state vectors, for finite differencing.
pub fn dynamics_vec(
    xv: &DVector<f64>,
    u: &DVector<f64>,
    p: &SatelliteParams,
) -> Result<DVector<f64>> {
    dynamics(&AttitudeState::from_vector(xv, p.wheel_count())?, u, p)
}

/// Classical RK4 with zero-order-held input. The Euler-parameter norm is
/// renormalized only within 1e-9 of the unit ball; anything farther is an
/// integration failure.
pub fn integrate_rk4(
    x: &AttitudeState,
    u: &DVector<f64>,
    ts: f64,
    substeps: usize,
    p: &SatelliteParams,
) -> Result<AttitudeState> {
    assert!(substeps >= 1, "substeps must be at least 1");
    let h = ts / substeps as f64;
    let l = p.wheel_count();
    let mut xv = x.as_vector();
    for _ in 0..substeps {
        let k1 = dynamics_vec(&xv, u, p)?;
        let k2 = dynamics_vec(&(&xv + &k1 * (h / 2.0)), u, p)?;
        let k3 = dynamics_vec(&(&xv + &k2 * (h / 2.0)), u, p)?;
        let k4 = dynamics_vec(&(&xv + &k3 * h), u, p)?;
        xv += (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (h / 6.0);
        let eps_norm =
            (xv[3 + l] * xv[3 + l] + xv[4 + l] * xv[4 + l] + xv[5 + l] * xv[5 + l]).sqrt();
        if eps_norm > 1.0 {
            if eps_norm > 1.0 + 1e-9 {
                return Err(Error::EpsOutOfRange(eps_norm));
            }
            for i in 0..3 {
                xv[3 + l + i] /= eps_norm;
            }
        }
    }
    AttitudeState::from_vector(&xv, l)
}
