//! End-to-end orchestration behind the CLI subcommands: condense the
//! configured problem, sample the explicit law, build and simplify the
//! lattice bundle, estimate its error bound, run the closed-loop
//! comparison and write every artifact under the output directory.

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::explicit::{
    closed_loop_rollout, dedupe_pieces_map, local_affine_law, local_law_piece, sample_states,
    AffinePiece, SampleMode,
};
use crate::lattice::{self, build_bundle, LatticeBundle};
use crate::linalg::{lqr_gain, QpOptions, QpStatus};
use crate::mpc::{condense, MpQp, MpcProblem};
use crate::satellite::attitude::eps_to_euler;
use crate::sim::{
    compare_controllers, run_closed_loop, Comparison, Controller, NonlinearPlant, SimResult,
};
use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Everything the satellite pipeline produces, kept in memory so the
/// acceptance suite can assert on it directly.
pub struct PipelineOutput {
    pub qp: Arc<MpQp>,
    pub bundle: LatticeBundle,
    pub eps_d: Vec<f64>,
    pub validation: Vec<DVector<f64>>,
    pub samples: Vec<(DVector<f64>, AffinePiece)>,
    pub sims: Vec<(String, SimResult)>,
    pub comparison: Comparison,
    pub distinct_pieces: usize,
}

/// Builds the lattice approximation for the configured problem without
/// running simulations.
pub fn build_approximation(
    cfg: &RunConfig,
    qp: &Arc<MpQp>,
) -> Result<(LatticeBundle, Vec<f64>, Vec<DVector<f64>>, Vec<(DVector<f64>, AffinePiece)>, usize)> {
    let box_min = DVector::from_vec(cfg.sampling.box_min.clone());
    let box_max = DVector::from_vec(cfg.sampling.box_max.clone());
    let mode: SampleMode = cfg.sampling.mode.into();

    // sampled states: random draws plus the nominal closed-loop path so
    // the scenario of interest is always covered
    let mut states = sample_states(
        qp,
        &box_min,
        &box_max,
        cfg.sampling.n_samples,
        cfg.sampling.seed,
        mode,
    )?;
    let x0 = cfg.initial_state().as_vector();
    states.extend(closed_loop_rollout(qp, &x0, cfg.simulation.steps.min(3000))?);

    // local law at every sample, warm-started along the ordering
    let opts = QpOptions::default();
    let mut warm: Vec<usize> = Vec::new();
    let mut samples: Vec<(DVector<f64>, AffinePiece)> = Vec::with_capacity(states.len());
    for x in &states {
        let sol = qp.solve_at(x, &opts, &warm)?;
        if sol.status != QpStatus::Optimal {
            continue;
        }
        warm = sol.warm_set();
        match local_law_piece(qp, x, &sol) {
            Ok(piece) => samples.push((x.clone(), piece.first_input(qp.m))),
            Err(Error::DegenerateActiveSet(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    // one representative sample per distinct piece (first occurrence);
    // the lattice then carries one term per region actually visited
    let pieces: Vec<AffinePiece> = samples.iter().map(|(_, p)| p.clone()).collect();
    let (unique, map) = dedupe_pieces_map(&pieces);
    let distinct = unique.len();
    let mut rep_idx: Vec<Option<usize>> = vec![None; unique.len()];
    for (i, &u) in map.iter().enumerate() {
        if rep_idx[u].is_none() {
            rep_idx[u] = Some(i);
        }
    }
    let build_samples: Vec<(DVector<f64>, AffinePiece)> = rep_idx
        .iter()
        .map(|i| samples[i.expect("every unique piece has an occurrence")].clone())
        .collect();

    let mut bundle = build_bundle(&build_samples)?.simplify();
    let ordering_states: Vec<DVector<f64>> =
        samples.iter().map(|(x, _)| x.clone()).step_by(4).collect();
    bundle.order_for_eval(&ordering_states);

    // held-out validation states for the error bound
    let validation = sample_states(
        qp,
        &box_min,
        &box_max,
        cfg.sampling.validation_samples,
        cfg.sampling.seed + 1,
        mode,
    )?;
    let eps_d = lattice::estimate_error_bound_bundle(&build_samples, &validation)?;
    Ok((bundle, eps_d, validation, build_samples, distinct))
}

/// Runs the configured controllers on the nonlinear plant from the
/// configured initial state.
pub fn run_simulations(
    cfg: &RunConfig,
    qp: &Arc<MpQp>,
    bundle: &LatticeBundle,
    mp: &MpcProblem,
) -> Result<Vec<(String, SimResult)>> {
    let params = cfg.satellite_params()?;
    let limits = cfg.physical_limits(&params);
    let plant = NonlinearPlant {
        params: &params,
        ts: cfg.mpc.ts_s,
        substeps: cfg.simulation.substeps,
    };
    let x0 = cfg.initial_state().as_vector();
    let mut sims = Vec::new();
    for name in &cfg.simulation.controllers {
        let mut ctrl = match name.as_str() {
            "online_mpc" => Controller::online_mpc(qp.clone()),
            "lattice" => {
                Controller::lattice(bundle.clone(), mp.u_min.clone(), mp.u_max.clone())
            }
            "lqr" => {
                let k = lqr_gain(&mp.a, &mp.b, &mp.q, &mp.r)?;
                Controller::lqr(k, mp.u_min.clone(), mp.u_max.clone())
            }
            other => return Err(Error::Config(format!("unknown controller '{other}'"))),
        };
        // optimal-cost trace for the predictive controllers only
        let trace = if name == "lqr" { None } else { Some(qp.as_ref()) };
        let res = run_closed_loop(
            &mut ctrl,
            &plant,
            &x0,
            cfg.simulation.steps,
            cfg.mpc.ts_s,
            &limits,
            trace,
        )?;
        sims.push((name.clone(), res));
    }
    Ok(sims)
}

/// Full pipeline: approximation, simulations, comparison.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineOutput> {
    let params = cfg.satellite_params()?;
    let (_, mp) = cfg.mpc_problem(&params)?;
    let qp = Arc::new(condense(&mp)?);
    let (bundle, eps_d, validation, samples, distinct_pieces) = build_approximation(cfg, &qp)?;
    let sims = run_simulations(cfg, &qp, &bundle, &mp)?;
    let entries: Vec<(&str, &SimResult)> =
        sims.iter().map(|(n, r)| (n.as_str(), r)).collect();
    let comparison = compare_controllers(&entries, &cfg.simulation.thruster_channels);
    Ok(PipelineOutput {
        qp,
        bundle,
        eps_d,
        validation,
        samples,
        sims,
        comparison,
        distinct_pieces,
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(text.as_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// `pipeline` subcommand: run everything, write artifacts and a manifest.
pub fn cmd_pipeline(config_path: &Path) -> Result<PathBuf> {
    let cfg = RunConfig::load(config_path)?;
    let cfg_bytes = std::fs::read(config_path)
        .map_err(|e| Error::io(config_path.display().to_string(), e))?;
    let out_dir = PathBuf::from(&cfg.output_dir);
    ensure_dir(&out_dir)?;

    println!("condensing MPC problem (horizon {})...", cfg.mpc.horizon);
    let out = run_pipeline(&cfg)?;
    println!(
        "lattice built: {} distinct first-input pieces, {} literal refs after simplification",
        out.distinct_pieces,
        out.bundle.size()
    );
    for (k, e) in out.eps_d.iter().enumerate() {
        println!("channel {k}: eps_d = {e:.3e}");
    }

    lattice::save(&out.bundle, &out_dir.join("lattice.json"))?;
    for (name, res) in &out.sims {
        res.write_csv(&out_dir.join(format!("sim_{name}.csv")))?;
        if let Some(fail) = &res.failed {
            println!("warning: {name} run stopped early: {fail}");
        }
    }
    write_text(&out_dir.join("comparison.csv"), &out.comparison.to_csv())?;
    write_text(&out_dir.join("comparison.txt"), &out.comparison.to_text())?;
    print!("{}", out.comparison.to_text());

    let manifest = serde_json::json!({
        "crate_version": env!("CARGO_PKG_VERSION"),
        "config_sha256": hex_digest(&cfg_bytes),
        "config": serde_json::from_slice::<serde_json::Value>(&cfg_bytes)
            .unwrap_or(serde_json::Value::Null),
        "seed": cfg.sampling.seed,
        "n_samples": cfg.sampling.n_samples,
        "validation_samples": cfg.sampling.validation_samples,
        "distinct_pieces": out.distinct_pieces,
        "eps_d": out.eps_d,
        "bundle_literal_refs": out.bundle.size(),
        "artifacts": {
            "lattice": "lattice.json",
            "comparison": ["comparison.csv", "comparison.txt"],
            "simulations": out.sims.iter()
                .map(|(n, _)| format!("sim_{n}.csv")).collect::<Vec<_>>(),
        },
    });
    write_text(
        &out_dir.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest).expect("manifest serialization"),
    )?;
    Ok(out_dir)
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// `bench` subcommand: reuse a previously built lattice file and re-run
/// only the closed-loop comparison.
pub fn cmd_bench(config_path: &Path) -> Result<()> {
    let cfg = RunConfig::load(config_path)?;
    let out_dir = PathBuf::from(&cfg.output_dir);
    let bundle = lattice::load(&out_dir.join("lattice.json"))?;
    let params = cfg.satellite_params()?;
    let (_, mp) = cfg.mpc_problem(&params)?;
    let qp = Arc::new(condense(&mp)?);
    let sims = run_simulations(&cfg, &qp, &bundle, &mp)?;
    let entries: Vec<(&str, &SimResult)> = sims.iter().map(|(n, r)| (n.as_str(), r)).collect();
    let comparison = compare_controllers(&entries, &cfg.simulation.thruster_channels);
    write_text(&out_dir.join("comparison.csv"), &comparison.to_csv())?;
    write_text(&out_dir.join("comparison.txt"), &comparison.to_text())?;
    print!("{}", comparison.to_text());
    Ok(())
}

/// Report of the worked two-dimensional example used by `example1`.
pub struct Example1Report {
    pub regulator_literal: AffinePiece,
    pub literal_count: usize,
    pub simplified_terms: usize,
    pub final_norm: f64,
    pub failures: Vec<String>,
}

/// The two-dimensional double-check problem: recovers the three known
/// literals from the three published sample points, builds and
/// simplifies the lattice, and rolls the closed loop from (1, 0).
pub fn example1_problem() -> Result<MpcProblem> {
    MpcProblem::new(
        DMatrix::from_row_slice(2, 2, &[0.7, -0.1, 0.2, 1.0]),
        DMatrix::from_row_slice(2, 1, &[0.1, 0.01]),
        DVector::zeros(2),
        DMatrix::identity(2, 2) * 2.0,
        DMatrix::from_element(1, 1, 0.01),
        DMatrix::zeros(2, 2),
        5,
        DVector::from_vec(vec![-2.0, -2.0]),
        DVector::from_vec(vec![2.0, 2.0]),
        DVector::from_vec(vec![-2.0]),
        DVector::from_vec(vec![2.0]),
    )
}

pub fn run_example1() -> Result<Example1Report> {
    let mp = example1_problem()?;
    let qp = Arc::new(condense(&mp)?);
    let mut failures = Vec::new();

    let points = [
        DVector::from_vec(vec![-1.5, 0.5]),
        DVector::from_vec(vec![0.0, 0.0]),
        DVector::from_vec(vec![1.0, 0.5]),
    ];
    let mut samples = Vec::new();
    for x in &points {
        let (piece, _) = local_affine_law(&qp, x)?;
        samples.push((x.clone(), piece.first_input(1)));
    }
    let regulator = samples[1].1.clone();
    if (regulator.f[(0, 0)] + 5.72).abs() > 0.005 || (regulator.f[(0, 1)] + 3.73).abs() > 0.005 {
        failures.push(format!(
            "regulator literal [{:.4}, {:.4}] departs from [-5.72, -3.73]",
            regulator.f[(0, 0)],
            regulator.f[(0, 1)]
        ));
    }
    for (idx, sign) in [(0usize, 1.0f64), (2usize, -1.0f64)] {
        let lit = &samples[idx].1;
        if lit.f.norm() > 1e-9 || (lit.g[0] - sign * 2.0).abs() > 1e-9 {
            failures.push(format!("saturation literal {idx} is not constant {sign}·2"));
        }
    }

    let lat = lattice::build_lattice(&samples, 0)?;
    let expected_terms: Vec<Vec<usize>> = vec![vec![0, 1], vec![0, 1], vec![0, 2]];
    if lat.terms != expected_terms {
        failures.push(format!("raw terms {:?} != expected {expected_terms:?}", lat.terms));
    }
    let simple = lat.simplify();
    if simple.terms.len() != 2 {
        failures.push(format!("simplified to {} terms, expected 2", simple.terms.len()));
    }

    // closed loop from (1, 0) on the model itself
    let x0 = DVector::from_vec(vec![1.0, 0.0]);
    let rollout = closed_loop_rollout(&qp, &x0, 51)?;
    let final_norm = rollout.last().map(|x| x.norm()).unwrap_or(f64::NAN);
    if !(final_norm < 1e-3) {
        failures.push(format!("|x(50)| = {final_norm:.3e}, expected < 1e-3"));
    }

    Ok(Example1Report {
        regulator_literal: regulator,
        literal_count: lat.literals.len(),
        simplified_terms: simple.terms.len(),
        final_norm,
        failures,
    })
}

/// `example1` subcommand: prints the recovered structure and writes the
/// closed-loop trajectory; nonzero exit when a check fails.
pub fn cmd_example1(out_dir: &Path) -> Result<Example1Report> {
    ensure_dir(out_dir)?;
    let report = run_example1()?;
    println!(
        "literals recovered: {} (regulator gain [{:.2}, {:.2}])",
        report.literal_count,
        report.regulator_literal.f[(0, 0)],
        report.regulator_literal.f[(0, 1)]
    );
    println!("simplified lattice terms: {}", report.simplified_terms);
    println!("closed-loop |x(50)| = {:.3e}", report.final_norm);

    // write the trajectory for plotting
    let mp = example1_problem()?;
    let qp = Arc::new(condense(&mp)?);
    let x0 = DVector::from_vec(vec![1.0, 0.0]);
    let mut ctrl = Controller::online_mpc(qp.clone());
    let limits = crate::sim::SimLimits {
        x_min: mp.x_min.clone(),
        x_max: mp.x_max.clone(),
        u_min: mp.u_min.clone(),
        u_max: mp.u_max.clone(),
    };
    let plant = crate::sim::LinearPlant {
        a: &mp.a,
        b: &mp.b,
        c: &mp.c,
    };
    let res = run_closed_loop(&mut ctrl, &plant, &x0, 50, 0.1, &limits, Some(&qp))?;
    res.write_csv(&out_dir.join("example1_closed_loop.csv"))?;

    for f in &report.failures {
        eprintln!("FAILED: {f}");
    }
    Ok(report)
}

/// `plotdata` subcommand: splits a simulation CSV into the four
/// plot-ready series (body rates, wheel speeds, thruster torques, Euler
/// angles in degrees).
pub fn cmd_plotdata(sim_csv: &Path, out_dir: &Path) -> Result<()> {
    let text =
        std::fs::read_to_string(sim_csv).map_err(|e| Error::io(sim_csv.display().to_string(), e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        path: sim_csv.display().to_string(),
        detail: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    let n = cols.iter().filter(|c| c.starts_with('x')).count();
    let m = cols.iter().filter(|c| c.starts_with('u')).count();
    if cols.first() != Some(&"t") || n < 6 || m < 3 {
        return Err(Error::Parse {
            path: sim_csv.display().to_string(),
            detail: format!("unexpected header '{header}' (need t, >=6 states, >=3 inputs)"),
        });
    }
    let wheels = n - 6;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let vals: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|v| v.parse::<f64>()).collect();
        let vals = vals.map_err(|e| Error::Parse {
            path: sim_csv.display().to_string(),
            detail: format!("line {}: {e}", lineno + 1),
        })?;
        if vals.len() != cols.len() {
            return Err(Error::Parse {
                path: sim_csv.display().to_string(),
                detail: format!("line {}: {} fields, expected {}", lineno + 1, vals.len(), cols.len()),
            });
        }
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: sim_csv.display().to_string(),
            detail: "no data rows".into(),
        });
    }
    ensure_dir(out_dir)?;

    let mut body = String::from("t,omega_x,omega_y,omega_z\n");
    let mut wheel = String::from("t");
    for k in 0..wheels {
        wheel.push_str(&format!(",omega_w{k}"));
    }
    wheel.push('\n');
    let mut torque = String::from("t,tau_x,tau_y,tau_z\n");
    let mut euler = String::from("t,phi_deg,theta_deg,psi_deg\n");
    let r2d = 180.0 / std::f64::consts::PI;
    for row in &rows {
        let t = row[0];
        body.push_str(&format!("{t},{},{},{}\n", row[1], row[2], row[3]));
        wheel.push_str(&format!("{t}"));
        for k in 0..wheels {
            wheel.push_str(&format!(",{}", row[4 + k]));
        }
        wheel.push('\n');
        let u0 = 1 + n;
        torque.push_str(&format!("{t},{},{},{}\n", row[u0], row[u0 + 1], row[u0 + 2]));
        let eps = nalgebra::Vector3::new(row[1 + n - 3], row[1 + n - 2], row[1 + n - 1]);
        let eta = (1.0 - eps.norm_squared()).max(0.0).sqrt();
        let (phi, theta, psi) = eps_to_euler(eta, &eps).map_err(|e| Error::Parse {
            path: sim_csv.display().to_string(),
            detail: format!("state row at t={t}: {e}"),
        })?;
        euler.push_str(&format!("{t},{},{},{}\n", phi * r2d, theta * r2d, psi * r2d));
    }
    write_text(&out_dir.join("omega_ob.csv"), &body)?;
    write_text(&out_dir.join("omega_w.csv"), &wheel)?;
    write_text(&out_dir.join("torque.csv"), &torque)?;
    write_text(&out_dir.join("euler_deg.csv"), &euler)?;
    Ok(())
}
