//! Closed-loop simulation of a plant under online MPC, a lattice PWA
//! approximation, or LQR, with per-step timing, constraint bookkeeping
//! and impulse accounting.

use crate::error::{Error, Result};
use crate::lattice::LatticeBundle;
use crate::linalg::{QpOptions, QpStatus};
use crate::mpc::{first_input, MpQp};
use crate::satellite::{integrate_rk4, AttitudeState, SatelliteParams};
use nalgebra::{DMatrix, DVector};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

/// Anything that can advance the state by one sampling interval under a
/// zero-order-held input.
pub trait Plant {
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>>;
}

/// The nonlinear attitude model integrated with RK4 substeps.
pub struct NonlinearPlant<'a> {
    pub params: &'a SatelliteParams,
    pub ts: f64,
    pub substeps: usize,
}

impl Plant for NonlinearPlant<'_> {
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        let state = AttitudeState::from_vector(x, self.params.wheel_count())?;
        let next = integrate_rk4(&state, u, self.ts, self.substeps, self.params)?;
        Ok(next.as_vector())
    }
}

/// The discrete linear model itself as the simulated plant.
pub struct LinearPlant<'a> {
    pub a: &'a DMatrix<f64>,
    pub b: &'a DMatrix<f64>,
    pub c: &'a DVector<f64>,
}

impl Plant for LinearPlant<'_> {
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.a * x + self.b * u + self.c)
    }
}

enum ControlLaw {
    OnlineMpc {
        qp: Arc<MpQp>,
        opts: QpOptions,
        warm: Vec<usize>,
    },
    Lattice(LatticeBundle),
    Lqr { gain: DMatrix<f64> },
}

/// A control law together with the actuator saturation limits; every
/// returned input is clamped to them.
pub struct Controller {
    law: ControlLaw,
    pub u_min: DVector<f64>,
    pub u_max: DVector<f64>,
    name: &'static str,
}

impl Controller {
    /// Receding-horizon controller solving the condensed QP each step,
    /// warm-started from the previous active set.
    pub fn online_mpc(qp: Arc<MpQp>) -> Self {
        let (u_min, u_max) = (qp.u_min.clone(), qp.u_max.clone());
        Controller {
            law: ControlLaw::OnlineMpc {
                qp,
                opts: QpOptions::default(),
                warm: Vec::new(),
            },
            u_min,
            u_max,
            name: "online_mpc",
        }
    }

    pub fn lattice(bundle: LatticeBundle, u_min: DVector<f64>, u_max: DVector<f64>) -> Self {
        Controller {
            law: ControlLaw::Lattice(bundle),
            u_min,
            u_max,
            name: "lattice",
        }
    }

    /// Static state feedback `u = -K x` with input clamping and no state
    /// constraint handling.
    pub fn lqr(gain: DMatrix<f64>, u_min: DVector<f64>, u_max: DVector<f64>) -> Self {
        Controller {
            law: ControlLaw::Lqr { gain },
            u_min,
            u_max,
            name: "lqr",
        }
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    /// Computes the input at `x` and the wall time spent doing so.
    pub fn control_step(&mut self, x: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
        let start = Instant::now();
        let mut u = match &mut self.law {
            ControlLaw::OnlineMpc { qp, opts, warm } => {
                let sol = qp.solve_at(x, opts, warm)?;
                match sol.status {
                    QpStatus::Optimal => {}
                    QpStatus::Infeasible => return Err(Error::QpInfeasible),
                    QpStatus::MaxIter => return Err(Error::QpMaxIter(sol.iterations)),
                }
                let useq = qp.input_sequence(&sol.z, x);
                *warm = sol.warm_set();
                first_input(&useq, qp.m)?
            }
            ControlLaw::Lattice(bundle) => bundle.eval(x),
            ControlLaw::Lqr { gain } => -(&*gain * x),
        };
        for i in 0..u.len() {
            u[i] = u[i].clamp(self.u_min[i], self.u_max[i]);
        }
        let elapsed = start.elapsed().as_secs_f64();
        Ok((u, elapsed))
    }
}

/// Physical limits the recorded trajectory is checked against.
#[derive(Debug, Clone)]
pub struct SimLimits {
    pub x_min: DVector<f64>,
    pub x_max: DVector<f64>,
    pub u_min: DVector<f64>,
    pub u_max: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub t: Vec<f64>,
    /// States x(0)..x(K); one more entry than inputs.
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub elapsed_s: Vec<f64>,
    /// (step, component) pairs where the recorded state or input left the
    /// limits; input components are offset by the state dimension.
    pub violations: Vec<(usize, usize)>,
    /// Integral of |u_j| dt per input channel.
    pub impulse_channels: DVector<f64>,
    /// Optimal-cost trace J*(x(k)) when a QP was supplied for tracing.
    pub lyapunov: Vec<f64>,
    /// Set when the run stopped early (controller infeasible).
    pub failed: Option<String>,
}

impl SimResult {
    pub fn impulse(&self, channels: &[usize]) -> f64 {
        channels.iter().map(|&c| self.impulse_channels[c]).sum()
    }

    /// Median per-step controller time, excluding the cold first step.
    pub fn median_online_s(&self) -> f64 {
        if self.elapsed_s.len() <= 1 {
            return self.elapsed_s.first().copied().unwrap_or(0.0);
        }
        let mut v: Vec<f64> = self.elapsed_s[1..].to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let k = v.len();
        if k % 2 == 1 {
            v[k / 2]
        } else {
            0.5 * (v[k / 2 - 1] + v[k / 2])
        }
    }

    pub fn constraint_ok(&self) -> bool {
        self.violations.is_empty() && self.failed.is_none()
    }

    /// One row per executed step: t, state, input, elapsed, J*.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f =
            std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let n = self.states.first().map(|s| s.len()).unwrap_or(0);
        let m = self.inputs.first().map(|u| u.len()).unwrap_or(0);
        let mut header = String::from("t");
        for i in 0..n {
            header.push_str(&format!(",x{i}"));
        }
        for j in 0..m {
            header.push_str(&format!(",u{j}"));
        }
        header.push_str(",elapsed_s,J_star");
        writeln!(f, "{header}").map_err(|e| Error::io(path.display().to_string(), e))?;
        for k in 0..self.inputs.len() {
            let mut row = format!("{}", self.t[k]);
            for i in 0..n {
                row.push_str(&format!(",{}", self.states[k][i]));
            }
            for j in 0..m {
                row.push_str(&format!(",{}", self.inputs[k][j]));
            }
            row.push_str(&format!(",{}", self.elapsed_s[k]));
            let jstar = self.lyapunov.get(k).copied().unwrap_or(f64::NAN);
            row.push_str(&format!(",{jstar}"));
            writeln!(f, "{row}").map_err(|e| Error::io(path.display().to_string(), e))?;
        }
        Ok(())
    }
}

/// Runs the receding-horizon loop for `steps` sampling intervals.
///
/// `trace_qp` turns on the optimal-cost trace (evaluated outside the
/// timed controller call). An infeasible controller stops the run and
/// marks it failed rather than substituting a fallback input.
pub fn run_closed_loop(
    ctrl: &mut Controller,
    plant: &dyn Plant,
    x0: &DVector<f64>,
    steps: usize,
    ts: f64,
    limits: &SimLimits,
    trace_qp: Option<&MpQp>,
) -> Result<SimResult> {
    assert!(steps >= 1, "steps must be at least 1");
    let n = x0.len();
    let mut res = SimResult {
        t: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        inputs: Vec::with_capacity(steps),
        elapsed_s: Vec::with_capacity(steps),
        violations: Vec::new(),
        impulse_channels: DVector::zeros(ctrl.u_min.len()),
        lyapunov: Vec::new(),
        failed: None,
    };
    let mut trace_warm: Vec<usize> = Vec::new();
    let mut x = x0.clone();
    res.states.push(x.clone());
    res.t.push(0.0);
    check_limits(&mut res.violations, 0, &x, None, limits, n);

    for k in 0..steps {
        if let Some(qp) = trace_qp {
            let sol = qp.solve_at(&x, &QpOptions::default(), &trace_warm)?;
            if sol.status == QpStatus::Optimal {
                trace_warm = sol.warm_set();
                res.lyapunov.push(qp.optimal_cost(&sol.z, &x));
            } else {
                res.lyapunov.push(f64::NAN);
            }
        }
        let (u, elapsed) = match ctrl.control_step(&x) {
            Ok(v) => v,
            Err(Error::QpInfeasible) => {
                res.failed = Some(format!("{}", Error::MpcInfeasible { step: k }));
                return Ok(res);
            }
            Err(e) => return Err(e),
        };
        for j in 0..u.len() {
            res.impulse_channels[j] += u[j].abs() * ts;
        }
        x = plant.step(&x, &u)?;
        res.inputs.push(u.clone());
        res.elapsed_s.push(elapsed);
        res.states.push(x.clone());
        res.t.push(ts * (k + 1) as f64);
        check_limits(&mut res.violations, k + 1, &x, Some(&u), limits, n);
    }
    Ok(res)
}

fn check_limits(
    violations: &mut Vec<(usize, usize)>,
    step: usize,
    x: &DVector<f64>,
    u: Option<&DVector<f64>>,
    limits: &SimLimits,
    n: usize,
) {
    const TOL: f64 = 1e-9;
    for i in 0..x.len() {
        if x[i] > limits.x_max[i] + TOL || x[i] < limits.x_min[i] - TOL {
            violations.push((step, i));
        }
    }
    if let Some(u) = u {
        for j in 0..u.len() {
            if u[j] > limits.u_max[j] + TOL || u[j] < limits.u_min[j] - TOL {
                violations.push((step, n + j));
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub name: String,
    pub constraint_ok: bool,
    pub median_online_s: f64,
    pub impulse: f64,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    /// median online-MPC step time over median lattice step time.
    pub lattice_speedup_vs_mpc: Option<f64>,
}

/// Summarizes runs of the same scenario under different controllers.
pub fn compare_controllers(
    entries: &[(&str, &SimResult)],
    thruster_channels: &[usize],
) -> Comparison {
    let rows: Vec<ComparisonRow> = entries
        .iter()
        .map(|(name, r)| ComparisonRow {
            name: (*name).to_string(),
            constraint_ok: r.constraint_ok(),
            median_online_s: r.median_online_s(),
            impulse: r.impulse(thruster_channels),
        })
        .collect();
    let find = |key: &str| rows.iter().find(|r| r.name == key);
    let speedup = match (find("online_mpc"), find("lattice")) {
        (Some(mpc), Some(lat)) if lat.median_online_s > 0.0 => {
            Some(mpc.median_online_s / lat.median_online_s)
        }
        _ => None,
    };
    Comparison {
        rows,
        lattice_speedup_vs_mpc: speedup,
    }
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("controller,constraint_ok,median_online_s,impulse\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.name,
                if r.constraint_ok { "Y" } else { "N" },
                r.median_online_s,
                r.impulse
            ));
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:<12} {:>10} {:>16} {:>12}\n",
            "controller", "constraint", "median online(s)", "impulse"
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:<12} {:>10} {:>16.3e} {:>12.4}\n",
                r.name,
                if r.constraint_ok { "Y" } else { "N" },
                r.median_online_s,
                r.impulse
            ));
        }
        if let Some(ratio) = self.lattice_speedup_vs_mpc {
            s.push_str(&format!("lattice speedup vs online MPC: {ratio:.1}x\n"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explicit::{local_affine_law, sample_states, SampleMode};
    use crate::lattice::build_bundle;
    use crate::linalg::lqr_gain;
    use crate::mpc::{condense, MpcProblem};
    use approx::assert_abs_diff_eq;

    fn example1(p_mode: &str) -> MpcProblem {
        let a = DMatrix::from_row_slice(2, 2, &[0.7, -0.1, 0.2, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.1, 0.01]);
        let q = DMatrix::identity(2, 2) * 2.0;
        let r = DMatrix::from_element(1, 1, 0.01);
        let p = match p_mode {
            "zero" => DMatrix::zeros(2, 2),
            _ => crate::linalg::solve_dare(&a, &b, &q, &r).unwrap(),
        };
        MpcProblem::new(
            a,
            b,
            DVector::zeros(2),
            q,
            r,
            p,
            5,
            DVector::from_vec(vec![-2.0, -2.0]),
            DVector::from_vec(vec![2.0, 2.0]),
            DVector::from_vec(vec![-2.0]),
            DVector::from_vec(vec![2.0]),
        )
        .unwrap()
    }

    fn limits(mp: &MpcProblem) -> SimLimits {
        SimLimits {
            x_min: mp.x_min.clone(),
            x_max: mp.x_max.clone(),
            u_min: mp.u_min.clone(),
            u_max: mp.u_max.clone(),
        }
    }

    fn example1_lattice(qp: &MpQp) -> LatticeBundle {
        let lo = DVector::from_vec(vec![-2.0, -2.0]);
        let hi = DVector::from_vec(vec![2.0, 2.0]);
        let xs = sample_states(qp, &lo, &hi, 120, 3, SampleMode::UniformBox).unwrap();
        let mut samples = Vec::new();
        for x in xs {
            if let Ok((piece, _)) = local_affine_law(qp, &x) {
                samples.push((x, piece.first_input(1)));
            }
        }
        build_bundle(&samples).unwrap().simplify()
    }

    #[test]
    fn controllers_rest_at_origin() {
        let mp = example1("zero");
        let qp = Arc::new(condense(&mp).unwrap());
        let bundle = example1_lattice(&qp);
        let k = lqr_gain(&mp.a, &mp.b, &mp.q, &mp.r).unwrap();
        let x0 = DVector::zeros(2);
        let lims = limits(&mp);
        let plant_a = mp.a.clone();
        let plant_b = mp.b.clone();
        let plant_c = mp.c.clone();
        let plant = LinearPlant {
            a: &plant_a,
            b: &plant_b,
            c: &plant_c,
        };
        for mut ctrl in [
            Controller::online_mpc(qp.clone()),
            Controller::lattice(bundle, mp.u_min.clone(), mp.u_max.clone()),
            Controller::lqr(k, mp.u_min.clone(), mp.u_max.clone()),
        ] {
            let res = run_closed_loop(&mut ctrl, &plant, &x0, 20, 0.1, &lims, None).unwrap();
            assert!(res.constraint_ok());
            assert_abs_diff_eq!(res.impulse(&[0]), 0.0, epsilon = 1e-12);
            for s in &res.states {
                assert!(s.norm() < 1e-9);
            }
        }
    }

    #[test]
    fn lattice_tracks_online_mpc() {
        let mp = example1("zero");
        let qp = Arc::new(condense(&mp).unwrap());
        let bundle = example1_lattice(&qp);
        let mut mpc = Controller::online_mpc(qp.clone());
        let mut lat = Controller::lattice(bundle, mp.u_min.clone(), mp.u_max.clone());
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let (u_mpc, _) = mpc.control_step(&x).unwrap();
        let (u_lat, _) = lat.control_step(&x).unwrap();
        assert!(
            (u_mpc.clone() - u_lat.clone()).norm() < 1e-6,
            "mpc {u_mpc:?} lattice {u_lat:?}"
        );
        // saturating state: the first input rides its bound
        let x_hot = DVector::from_vec(vec![-1.5, 0.5]);
        let (u, _) = mpc.control_step(&x_hot).unwrap();
        assert_abs_diff_eq!(u[0], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn closed_loop_converges_and_is_deterministic() {
        let mp = example1("zero");
        let qp = Arc::new(condense(&mp).unwrap());
        let x0 = DVector::from_vec(vec![1.0, 0.0]);
        let lims = limits(&mp);
        let plant = LinearPlant {
            a: &mp.a,
            b: &mp.b,
            c: &mp.c,
        };
        let run = |qp: &Arc<MpQp>| {
            let mut ctrl = Controller::online_mpc(qp.clone());
            run_closed_loop(&mut ctrl, &plant, &x0, 50, 0.1, &lims, Some(qp)).unwrap()
        };
        let a = run(&qp);
        let b = run(&qp);
        assert!(a.states.last().unwrap().norm() < 1e-3);
        for (sa, sb) in a.states.iter().zip(&b.states) {
            assert_eq!(sa, sb, "identical runs must agree bit for bit");
        }
        assert_eq!(a.inputs, b.inputs);
        assert_eq!(a.lyapunov.len(), 50);
    }

    #[test]
    fn comparison_table_shape() {
        let mp = example1("zero");
        let qp = Arc::new(condense(&mp).unwrap());
        let x0 = DVector::from_vec(vec![1.0, 0.0]);
        let lims = limits(&mp);
        let plant = LinearPlant {
            a: &mp.a,
            b: &mp.b,
            c: &mp.c,
        };
        let mut ctrl = Controller::online_mpc(qp.clone());
        let res = run_closed_loop(&mut ctrl, &plant, &x0, 30, 0.1, &lims, None).unwrap();
        let cmp = compare_controllers(&[("online_mpc", &res), ("online_mpc", &res)], &[0]);
        assert_eq!(cmp.rows.len(), 2);
        assert_eq!(cmp.rows[0].impulse, cmp.rows[1].impulse);
        let csv = cmp.to_csv();
        assert!(csv.starts_with("controller,"));
        assert_eq!(csv.lines().count(), 3);
    }
}
