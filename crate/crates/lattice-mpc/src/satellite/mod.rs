//! Nonlinear satellite attitude dynamics with momentum-exchange wheels,
//! attitude conversions, Jacobian linearization and zero-order-hold
//! discretization.
//!
//! Frames: the body frame is aligned with the principal axes; the orbital
//! frame has Z toward the Earth's center and rotates at the (circular)
//! orbital rate about its -Y axis. The state is
//! `x = [omega_ob, omega_w, eps]` where `omega_ob` is the angular velocity
//! of the body relative to the orbital frame expressed in the body frame,
//! `omega_w` the wheel speeds relative to the body, and `eps` the vector
//! part of the attitude Euler parameters (eta recovered as the
//! nonnegative root).

pub mod attitude;
mod dynamics;
mod linearization;

pub use dynamics::{dynamics, dynamics_vec, integrate_rk4};
pub use linearization::{discretize, linearize, LinearModel};

use crate::error::{Error, Result};
use crate::linalg;
use nalgebra::{DMatrix, DVector, Matrix3, Matrix3xX, Vector3};

/// Physical constants of the plant. Immutable after construction.
#[derive(Debug, Clone)]
pub struct SatelliteParams {
    inertia: Matrix3<f64>,
    wheel_inertia: DVector<f64>,
    wheel_axes: Matrix3xX<f64>,
    orbital_rate: f64,
    pub tau_max: Vector3<f64>,
    pub tau_w_max: f64,
    pub omega_w_max: f64,
    j: Matrix3<f64>,
    j_inv: Matrix3<f64>,
}

impl SatelliteParams {
    pub fn new(
        inertia: Matrix3<f64>,
        wheel_inertia: DVector<f64>,
        wheel_axes: Matrix3xX<f64>,
        orbital_rate: f64,
        tau_max: Vector3<f64>,
        tau_w_max: f64,
        omega_w_max: f64,
    ) -> Result<Self> {
        let l = wheel_inertia.len();
        if wheel_axes.ncols() != l {
            return Err(Error::DimensionMismatch {
                context: "SatelliteParams wheel axes",
                expected: format!("{l} columns"),
                got: format!("{}", wheel_axes.ncols()),
            });
        }
        let inertia_d = DMatrix::from_fn(3, 3, |i, j| inertia[(i, j)]);
        linalg::check_spd("SatelliteParams inertia", &inertia_d)?;
        if wheel_inertia.iter().any(|v| *v <= 0.0) {
            return Err(Error::Config("wheel inertia must be positive".into()));
        }
        for c in 0..l {
            let norm = wheel_axes.column(c).norm();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "wheel axis {c} is not a unit vector (norm {norm})"
                )));
            }
        }
        // J = I - Lambda I_w Lambda'
        let mut j = inertia;
        for c in 0..l {
            let axis = wheel_axes.column(c).clone_owned();
            j -= wheel_inertia[c] * &axis * axis.transpose();
        }
        let j_d = DMatrix::from_fn(3, 3, |i, jx| j[(i, jx)]);
        linalg::check_spd("SatelliteParams J = I - Lambda I_w Lambda'", &j_d)?;
        let j_inv = j.try_inverse().ok_or(Error::NotSpd {
            context: "SatelliteParams J",
        })?;
        Ok(SatelliteParams {
            inertia,
            wheel_inertia,
            wheel_axes,
            orbital_rate,
            tau_max,
            tau_w_max,
            omega_w_max,
            j,
            j_inv,
        })
    }

    pub fn wheel_count(&self) -> usize {
        self.wheel_inertia.len()
    }

    pub fn state_dim(&self) -> usize {
        6 + self.wheel_count()
    }

    pub fn input_dim(&self) -> usize {
        3 + self.wheel_count()
    }

    pub fn inertia(&self) -> &Matrix3<f64> {
        &self.inertia
    }

    pub fn wheel_inertia(&self) -> &DVector<f64> {
        &self.wheel_inertia
    }

    pub fn wheel_axes(&self) -> &Matrix3xX<f64> {
        &self.wheel_axes
    }

    pub fn orbital_rate(&self) -> f64 {
        self.orbital_rate
    }

    /// Inertia-like matrix J = I - Lambda I_w Lambda'.
    pub fn j_matrix(&self) -> &Matrix3<f64> {
        &self.j
    }

    pub fn j_inverse(&self) -> &Matrix3<f64> {
        &self.j_inv
    }

    /// Total angular momentum in body coordinates,
    /// `h = I w_ib + Lambda I_w w_w`, with `w_ib` the body rate relative
    /// to the inertial frame.
    pub fn momentum_body(&self, x: &AttitudeState) -> Result<Vector3<f64>> {
        let w_ib = dynamics::inertial_rate(x, self)?;
        let mut h = self.inertia * w_ib;
        for c in 0..self.wheel_count() {
            h += self.wheel_axes.column(c) * (self.wheel_inertia[c] * x.omega_w[c]);
        }
        Ok(h)
    }
}

/// The 7-dimensional (for one wheel) plant state.
#[derive(Debug, Clone, PartialEq)]
pub struct AttitudeState {
    pub omega_ob: Vector3<f64>,
    pub omega_w: DVector<f64>,
    pub eps: Vector3<f64>,
}

impl AttitudeState {
    pub fn zero(wheels: usize) -> Self {
        AttitudeState {
            omega_ob: Vector3::zeros(),
            omega_w: DVector::zeros(wheels),
            eps: Vector3::zeros(),
        }
    }

    pub fn as_vector(&self) -> DVector<f64> {
        let l = self.omega_w.len();
        let mut v = DVector::zeros(6 + l);
        for i in 0..3 {
            v[i] = self.omega_ob[i];
        }
        for i in 0..l {
            v[3 + i] = self.omega_w[i];
        }
        for i in 0..3 {
            v[3 + l + i] = self.eps[i];
        }
        v
    }

    pub fn from_vector(v: &DVector<f64>, wheels: usize) -> Result<Self> {
        if v.len() != 6 + wheels {
            return Err(Error::DimensionMismatch {
                context: "AttitudeState::from_vector",
                expected: format!("{}", 6 + wheels),
                got: format!("{}", v.len()),
            });
        }
        Ok(AttitudeState {
            omega_ob: Vector3::new(v[0], v[1], v[2]),
            omega_w: DVector::from_fn(wheels, |i, _| v[3 + i]),
            eps: Vector3::new(v[3 + wheels], v[4 + wheels], v[5 + wheels]),
        })
    }

    /// Scalar Euler parameter, nonnegative branch.
    pub fn eta(&self) -> Result<f64> {
        let e2 = self.eps.norm_squared();
        if e2 > 1.0 + 2e-9 {
            return Err(Error::EpsOutOfRange(e2.sqrt()));
        }
        Ok((1.0 - e2).max(0.0).sqrt())
    }
}
