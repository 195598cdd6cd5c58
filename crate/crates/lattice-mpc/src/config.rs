//! JSON run configuration. Keys carry their units; unknown keys are
//! rejected so that typos fail loudly instead of silently falling back
//! to defaults.

use crate::error::{Error, Result};
use crate::explicit::SampleMode;
use crate::linalg::solve_dare;
use crate::mpc::MpcProblem;
use crate::satellite::{AttitudeState, LinearModel, SatelliteParams};
use nalgebra::{DMatrix, DVector, Matrix3, Matrix3xX, Vector3};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub satellite: SatelliteConfig,
    pub mpc: MpcConfig,
    pub sampling: SamplingConfig,
    pub simulation: SimulationConfig,
    pub output_dir: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SatelliteConfig {
    pub inertia_diag_kgm2: [f64; 3],
    pub wheel_inertia_kgm2: Vec<f64>,
    /// One unit axis per wheel.
    pub wheel_axes: Vec<[f64; 3]>,
    /// Circular-orbit rate; defaults to a ~92-minute LEO.
    #[serde(default = "default_orbital_rate")]
    pub orbital_rate_rad_s: f64,
    pub tau_max_nm: [f64; 3],
    pub tau_w_max_nm: f64,
    pub omega_w_max_rad_s: f64,
}

fn default_orbital_rate() -> f64 {
    1.1363e-3
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum TerminalWeight {
    /// No terminal penalty.
    Zero,
    /// Terminal state weighted like any other stage (P = Q).
    StateWeight,
    /// Riccati solution of (A, B, Q, R).
    Dare,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcConfig {
    pub q_diag: Vec<f64>,
    pub r_diag: Vec<f64>,
    pub horizon: usize,
    pub ts_s: f64,
    pub x_min: Vec<f64>,
    pub x_max: Vec<f64>,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    pub terminal_weight: TerminalWeight,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub mode: SampleModeConfig,
    pub box_min: Vec<f64>,
    pub box_max: Vec<f64>,
    /// States drawn (seed + 1) for the error-bound estimate.
    pub validation_samples: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SampleModeConfig {
    UniformBox,
    Trajectory,
}

impl From<SampleModeConfig> for SampleMode {
    fn from(m: SampleModeConfig) -> Self {
        match m {
            SampleModeConfig::UniformBox => SampleMode::UniformBox,
            SampleModeConfig::Trajectory => SampleMode::Trajectory,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub steps: usize,
    pub substeps: usize,
    pub x0_omega_ob_rad_s: [f64; 3],
    pub x0_omega_w_rad_s: Vec<f64>,
    pub x0_euler_deg: [f64; 3],
    pub controllers: Vec<String>,
    /// Input channels whose |u| integral counts as propellant.
    pub thruster_channels: Vec<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.satellite.wheel_inertia_kgm2.len();
        if self.satellite.wheel_axes.len() != l {
            return Err(Error::Config(format!(
                "wheel_axes has {} entries but wheel_inertia_kgm2 has {l}",
                self.satellite.wheel_axes.len()
            )));
        }
        let n = 6 + l;
        let m = 3 + l;
        let checks: [(&str, usize, usize); 8] = [
            ("mpc.q_diag", self.mpc.q_diag.len(), n),
            ("mpc.r_diag", self.mpc.r_diag.len(), m),
            ("mpc.x_min", self.mpc.x_min.len(), n),
            ("mpc.x_max", self.mpc.x_max.len(), n),
            ("mpc.u_min", self.mpc.u_min.len(), m),
            ("mpc.u_max", self.mpc.u_max.len(), m),
            ("sampling.box_min", self.sampling.box_min.len(), n),
            ("sampling.box_max", self.sampling.box_max.len(), n),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(Error::Config(format!(
                    "{name}: expected {want} entries, got {got}"
                )));
            }
        }
        if self.simulation.x0_omega_w_rad_s.len() != l {
            return Err(Error::Config(format!(
                "simulation.x0_omega_w_rad_s: expected {l} entries, got {}",
                self.simulation.x0_omega_w_rad_s.len()
            )));
        }
        if self.mpc.ts_s <= 0.0 {
            return Err(Error::Config("mpc.ts_s must be positive".into()));
        }
        if self.mpc.horizon == 0 || self.simulation.steps == 0 || self.simulation.substeps == 0 {
            return Err(Error::Config(
                "horizon, steps and substeps must be positive".into(),
            ));
        }
        if self.sampling.n_samples == 0 || self.sampling.validation_samples == 0 {
            return Err(Error::Config("sample counts must be positive".into()));
        }
        for c in &self.simulation.thruster_channels {
            if *c >= m {
                return Err(Error::Config(format!(
                    "thruster channel {c} out of range (m = {m})"
                )));
            }
        }
        for name in &self.simulation.controllers {
            if !matches!(name.as_str(), "online_mpc" | "lattice" | "lqr") {
                return Err(Error::Config(format!("unknown controller '{name}'")));
            }
        }
        Ok(())
    }

    pub fn satellite_params(&self) -> Result<SatelliteParams> {
        let sc = &self.satellite;
        let l = sc.wheel_inertia_kgm2.len();
        let mut axes = Matrix3xX::zeros(l);
        for (c, a) in sc.wheel_axes.iter().enumerate() {
            axes.set_column(c, &Vector3::new(a[0], a[1], a[2]));
        }
        SatelliteParams::new(
            Matrix3::from_diagonal(&Vector3::new(
                sc.inertia_diag_kgm2[0],
                sc.inertia_diag_kgm2[1],
                sc.inertia_diag_kgm2[2],
            )),
            DVector::from_vec(sc.wheel_inertia_kgm2.clone()),
            axes,
            sc.orbital_rate_rad_s,
            Vector3::new(sc.tau_max_nm[0], sc.tau_max_nm[1], sc.tau_max_nm[2]),
            sc.tau_w_max_nm,
            sc.omega_w_max_rad_s,
        )
    }

    /// Linearizes at the origin and assembles the MPC problem with the
    /// configured terminal weight.
    pub fn mpc_problem(&self, params: &SatelliteParams) -> Result<(LinearModel, MpcProblem)> {
        let l = params.wheel_count();
        let model = LinearModel::from_params(
            params,
            &AttitudeState::zero(l),
            &DVector::zeros(3 + l),
            self.mpc.ts_s,
        )?;
        let q = DMatrix::from_diagonal(&DVector::from_vec(self.mpc.q_diag.clone()));
        let r = DMatrix::from_diagonal(&DVector::from_vec(self.mpc.r_diag.clone()));
        let p = match self.mpc.terminal_weight {
            TerminalWeight::Zero => DMatrix::zeros(q.nrows(), q.ncols()),
            TerminalWeight::StateWeight => q.clone(),
            TerminalWeight::Dare => solve_dare(&model.a, &model.b, &q, &r)?,
        };
        let mp = MpcProblem::new(
            model.a.clone(),
            model.b.clone(),
            model.c.clone(),
            q,
            r,
            p,
            self.mpc.horizon,
            DVector::from_vec(self.mpc.x_min.clone()),
            DVector::from_vec(self.mpc.x_max.clone()),
            DVector::from_vec(self.mpc.u_min.clone()),
            DVector::from_vec(self.mpc.u_max.clone()),
        )?;
        Ok((model, mp))
    }

    /// Initial state from the configured Euler angles and rates.
    pub fn initial_state(&self) -> AttitudeState {
        let d2r = std::f64::consts::PI / 180.0;
        let (_, eps) = crate::satellite::attitude::euler_to_eps(
            self.simulation.x0_euler_deg[0] * d2r,
            self.simulation.x0_euler_deg[1] * d2r,
            self.simulation.x0_euler_deg[2] * d2r,
        );
        AttitudeState {
            omega_ob: Vector3::new(
                self.x0_omega(0),
                self.x0_omega(1),
                self.x0_omega(2),
            ),
            omega_w: DVector::from_vec(self.simulation.x0_omega_w_rad_s.clone()),
            eps,
        }
    }

    fn x0_omega(&self, i: usize) -> f64 {
        self.simulation.x0_omega_ob_rad_s[i]
    }

    /// Physical limits the simulated trajectories are checked against:
    /// the configured state box with the wheel-speed rows widened to the
    /// hardware limit (the MPC bound may be tightened below it), and the
    /// hardware torque limits.
    pub fn physical_limits(&self, params: &SatelliteParams) -> crate::sim::SimLimits {
        let l = params.wheel_count();
        let n = 6 + l;
        let mut x_max = DVector::from_vec(self.mpc.x_max.clone());
        let mut x_min = DVector::from_vec(self.mpc.x_min.clone());
        for i in 0..l {
            x_max[3 + i] = params.omega_w_max;
            x_min[3 + i] = -params.omega_w_max;
        }
        let mut u_max = DVector::zeros(3 + l);
        for i in 0..3 {
            u_max[i] = params.tau_max[i];
        }
        for i in 0..l {
            u_max[3 + i] = params.tau_w_max;
        }
        let u_min = -&u_max;
        debug_assert_eq!(x_max.len(), n);
        crate::sim::SimLimits {
            x_min,
            x_max,
            u_min,
            u_max,
        }
    }

    /// The small-satellite scenario used throughout: diagonal inertia,
    /// one Y-axis momentum wheel, 0.1 s sampling, 24-step horizon.
    pub fn satellite_demo() -> RunConfig {
        RunConfig {
            satellite: SatelliteConfig {
                inertia_diag_kgm2: [4.250, 4.334, 3.664],
                wheel_inertia_kgm2: vec![4e-5],
                wheel_axes: vec![[0.0, 1.0, 0.0]],
                orbital_rate_rad_s: default_orbital_rate(),
                tau_max_nm: [0.0484, 0.0484, 0.0398],
                tau_w_max_nm: 0.0020,
                omega_w_max_rad_s: 527.0,
            },
            mpc: MpcConfig {
                q_diag: vec![500.0, 500.0, 500.0, 1e-7, 100.0, 100.0, 100.0],
                r_diag: vec![200.0, 200.0, 200.0, 100.0],
                horizon: 24,
                ts_s: 0.1,
                // wheel-speed rows tightened 0.5 rad/s below the hardware
                // limit so linear-prediction error cannot push the
                // nonlinear plant over it while the bound is ridden
                x_min: vec![-1.0, -1.0, -1.0, -526.5, -1.0, -1.0, -1.0],
                x_max: vec![1.0, 1.0, 1.0, 526.5, 1.0, 1.0, 1.0],
                u_min: vec![-0.0484, -0.0484, -0.0398, -0.0020],
                u_max: vec![0.0484, 0.0484, 0.0398, 0.0020],
                terminal_weight: TerminalWeight::StateWeight,
            },
            sampling: SamplingConfig {
                n_samples: 12_000,
                seed: 42,
                mode: SampleModeConfig::Trajectory,
                box_min: vec![-0.2, -0.2, -0.2, -400.0, -0.9, -0.9, -0.9],
                box_max: vec![0.2, 0.2, 0.2, 400.0, 0.9, 0.9, 0.9],
                validation_samples: 1000,
            },
            simulation: SimulationConfig {
                steps: 3000,
                substeps: 10,
                x0_omega_ob_rad_s: [-0.05, 0.15, -0.08],
                x0_omega_w_rad_s: vec![300.0],
                x0_euler_deg: [-25.0, 60.0, 90.0],
                controllers: vec![
                    "online_mpc".to_string(),
                    "lattice".to_string(),
                    "lqr".to_string(),
                ],
                thruster_channels: vec![0, 1, 2],
            },
            output_dir: "out/satellite".to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_config_is_valid_and_roundtrips() {
        let cfg = RunConfig::satellite_demo();
        cfg.validate().unwrap();
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        back.validate().unwrap();
        assert_eq!(back.mpc.horizon, 24);
        let params = back.satellite_params().unwrap();
        assert_eq!(params.wheel_count(), 1);
        let x0 = back.initial_state();
        assert!((x0.eps.norm() - 0.853_352_836_939_73).abs() < 1e-10);
    }

    #[test]
    fn unknown_and_missing_keys_are_rejected() {
        let cfg = RunConfig::satellite_demo();
        let mut v: serde_json::Value = serde_json::to_value(&cfg).unwrap();
        v["mpc"]["bogus_key"] = serde_json::json!(1.0);
        let err = serde_json::from_value::<RunConfig>(v.clone()).unwrap_err();
        assert!(format!("{err}").contains("bogus_key"));

        let mut v: serde_json::Value = serde_json::to_value(&cfg).unwrap();
        v["mpc"].as_object_mut().unwrap().remove("horizon");
        let err = serde_json::from_value::<RunConfig>(v).unwrap_err();
        assert!(format!("{err}").contains("horizon"));
    }

    #[test]
    fn dimension_validation() {
        let mut cfg = RunConfig::satellite_demo();
        cfg.mpc.q_diag.pop();
        let err = cfg.validate().unwrap_err();
        assert!(format!("{err}").contains("q_diag"));
    }
}
