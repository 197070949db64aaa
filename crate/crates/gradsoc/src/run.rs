//! Run orchestration: build the model a scenario describes, solve it
//! (continuous or branch-and-bound), validate the result, and write the
//! artifact files. Shared by the command line and the C interface.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::bnb::{solve_mixed, BnbSettings, BnbStatus};
use crate::ipm::{solve_named, SolveSettings, SolveStatus};
use crate::models::{build_design, build_dynamic, build_steady, ModelIndex, ModelSolution};
use crate::report;
use crate::scenario::Scenario;
use crate::validate::{self, Inflows};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_SOLVER_FAILURE: i32 = 3;
pub const EXIT_BAD_INPUT: i32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunMode {
    /// Pick from the scenario: dynamic if a spec is present, design when
    /// flagged with candidate pipes, steady otherwise.
    Auto,
    Steady,
    Design,
    Dynamic,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub name: String,
    pub status: String,
    pub exit_code: i32,
    pub message: String,
    pub objective: Option<f64>,
    pub exactness: Option<f64>,
    /// 1-based chosen pipes for design runs.
    pub chosen_pipes: Vec<(usize, usize)>,
    pub nodes: Option<usize>,
    pub bound: Option<f64>,
    pub warnings: Vec<String>,
    pub files: Vec<PathBuf>,
    pub solution: Option<ModelSolution>,
}

impl RunOutput {
    fn failure(name: &str, exit_code: i32, message: String) -> Self {
        RunOutput {
            name: name.to_string(),
            status: "error".into(),
            exit_code,
            message,
            objective: None,
            exactness: None,
            chosen_pipes: vec![],
            nodes: None,
            bound: None,
            warnings: vec![],
            files: vec![],
            solution: None,
        }
    }

    pub fn summary(&self) -> String {
        let mut s = format!("{}: {}", self.name, self.status);
        if let Some(o) = self.objective {
            s.push_str(&format!(", objective {o:.6}"));
        }
        if let Some(e) = self.exactness {
            s.push_str(&format!(", exactness {e:.3e}"));
        }
        if !self.chosen_pipes.is_empty() {
            let pipes: Vec<String> = self
                .chosen_pipes
                .iter()
                .map(|(a, b)| format!("{a}->{b}"))
                .collect();
            s.push_str(&format!(", pipes [{}]", pipes.join(", ")));
        }
        if let Some(n) = self.nodes {
            s.push_str(&format!(", nodes {n}"));
        }
        if !self.message.is_empty() {
            s.push_str(&format!(" ({})", self.message));
        }
        s
    }
}

fn resolve_mode(sc: &Scenario, mode: RunMode) -> RunMode {
    match mode {
        RunMode::Auto => {
            if sc.dynamic.is_some() {
                RunMode::Dynamic
            } else if sc.design && !sc.network.candidate_pipes().is_empty() {
                RunMode::Design
            } else {
                RunMode::Steady
            }
        }
        m => m,
    }
}

fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Optimal => "optimal",
        SolveStatus::PrimalInfeasible => "infeasible",
        SolveStatus::DualInfeasible => "unbounded",
        SolveStatus::IterationLimit => "iteration_limit",
        SolveStatus::NumericalError => "numerical_error",
    }
}

fn solve_exit(s: SolveStatus) -> i32 {
    match s {
        SolveStatus::Optimal => EXIT_OK,
        SolveStatus::PrimalInfeasible => EXIT_INFEASIBLE,
        _ => EXIT_SOLVER_FAILURE,
    }
}

/// Executes a scenario and writes artifacts under `out_dir` (when given).
pub fn run_scenario(sc: &Scenario, out_dir: Option<&Path>, mode: RunMode) -> RunOutput {
    if let Err(e) = sc.network.validate() {
        return RunOutput::failure(&sc.name, EXIT_BAD_INPUT, e.to_string());
    }
    if let Some(dir) = out_dir {
        if let Err(e) = std::fs::create_dir_all(dir) {
            return RunOutput::failure(&sc.name, EXIT_BAD_INPUT, format!("out dir: {e}"));
        }
    }
    match resolve_mode(sc, mode) {
        RunMode::Steady => run_steady(sc, out_dir),
        RunMode::Design => run_design(sc, out_dir),
        RunMode::Dynamic => run_dynamic(sc, out_dir),
        RunMode::Auto => unreachable!(),
    }
}

/// Steady solve with validation against the certificate, the first-order
/// conditions, and the simulation oracle.
fn run_steady(sc: &Scenario, out_dir: Option<&Path>) -> RunOutput {
    let t_total = Instant::now();
    let activation = vec![0.0; sc.network.candidate_pipes().len()];
    let (prog, idx) = match build_steady(&sc.network, &sc.model, &sc.omega, &activation) {
        Ok(v) => v,
        Err(e) => return RunOutput::failure(&sc.name, EXIT_BAD_INPUT, e.to_string()),
    };
    let t_solve = Instant::now();
    let sol = match solve_named(&prog, &sc.solver.to_settings()) {
        Ok(s) => s,
        Err(e) => return RunOutput::failure(&sc.name, EXIT_SOLVER_FAILURE, e.to_string()),
    };
    let solve_secs = t_solve.elapsed().as_secs_f64();
    let mut out = RunOutput {
        name: sc.name.clone(),
        status: status_name(sol.status).into(),
        exit_code: solve_exit(sol.status),
        message: String::new(),
        objective: Some(sol.objective),
        exactness: None,
        chosen_pipes: vec![],
        nodes: None,
        bound: None,
        warnings: idx.warnings.clone(),
        files: vec![],
        solution: None,
    };
    if sol.status != SolveStatus::Optimal {
        return out;
    }
    validate_and_write(
        sc,
        out_dir,
        &prog,
        &idx,
        &sol,
        &activation,
        &mut out,
        solve_secs,
        t_total,
    );
    out
}

/// Branch-and-bound design run; the incumbent activation is re-solved as a
/// fixed-topology model at tighter tolerance for clean duals.
fn run_design(sc: &Scenario, out_dir: Option<&Path>) -> RunOutput {
    let t_total = Instant::now();
    let (prog, idx) = match build_design(&sc.network, &sc.model, &sc.omega) {
        Ok(v) => v,
        Err(e) => return RunOutput::failure(&sc.name, EXIT_BAD_INPUT, e.to_string()),
    };
    let settings = BnbSettings {
        rel_gap: sc.bnb.rel_gap,
        abs_gap: sc.bnb.abs_gap,
        node_limit: sc.bnb.node_limit,
        deterministic: sc.bnb.deterministic,
        solver: sc.solver.to_settings(),
        ..Default::default()
    };
    let t_solve = Instant::now();
    let bb = match solve_mixed(&prog, &settings) {
        Ok(b) => b,
        Err(e) => return RunOutput::failure(&sc.name, EXIT_SOLVER_FAILURE, e.to_string()),
    };
    let solve_secs = t_solve.elapsed().as_secs_f64();
    let mut out = RunOutput {
        name: sc.name.clone(),
        status: match bb.status {
            BnbStatus::Optimal => "optimal".into(),
            BnbStatus::Infeasible => "infeasible".into(),
            BnbStatus::NodeLimit => "node_limit".into(),
        },
        exit_code: match bb.status {
            BnbStatus::Optimal => EXIT_OK,
            BnbStatus::Infeasible => EXIT_INFEASIBLE,
            BnbStatus::NodeLimit => EXIT_SOLVER_FAILURE,
        },
        message: String::new(),
        objective: Some(bb.objective),
        exactness: None,
        chosen_pipes: idx
            .candidate_pipes
            .iter()
            .zip(&bb.assignment)
            .filter(|(_, &a)| a > 0.5)
            .map(|(&pi, _)| (sc.network.pipes[pi].from + 1, sc.network.pipes[pi].to + 1))
            .collect(),
        nodes: Some(bb.nodes),
        bound: Some(bb.bound),
        warnings: idx.warnings.clone(),
        files: vec![],
        solution: None,
    };
    if bb.status == BnbStatus::Infeasible || bb.incumbent.is_none() {
        return out;
    }
    if let Some(dir) = out_dir {
        let path = dir.join("design.csv");
        if report::write_design_csv(&path, &sc.network, &idx, &bb.assignment).is_ok() {
            out.files.push(path);
        }
        let log_path = dir.join("bnb_log.txt");
        if std::fs::write(&log_path, bb.log_text()).is_ok() {
            out.files.push(log_path);
        }
    }
    // fixed-activation re-solve for duals and validation
    let (steady_prog, steady_idx) =
        match build_steady(&sc.network, &sc.model, &sc.omega, &bb.assignment) {
            Ok(v) => v,
            Err(e) => {
                out.message = format!("fixed-topology rebuild failed: {e}");
                return out;
            }
        };
    let tight = SolveSettings {
        eps_feas: 1e-10,
        eps_gap: 1e-10,
        ..sc.solver.to_settings()
    };
    match solve_named(&steady_prog, &tight) {
        Ok(steady_sol) if steady_sol.status == SolveStatus::Optimal => {
            if (steady_sol.objective - bb.objective).abs() > 1e-5 * (1.0 + bb.objective.abs()) {
                out.warnings.push(format!(
                    "fixed-topology objective {:.9} differs from the search incumbent {:.9}",
                    steady_sol.objective, bb.objective
                ));
            }
            validate_and_write(
                sc,
                out_dir,
                &steady_prog,
                &steady_idx,
                &steady_sol,
                &bb.assignment,
                &mut out,
                solve_secs,
                t_total,
            );
        }
        _ => out
            .warnings
            .push("fixed-topology re-solve failed; validation skipped".into()),
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn validate_and_write(
    sc: &Scenario,
    out_dir: Option<&Path>,
    prog: &crate::conic::ConicProgram,
    idx: &ModelIndex,
    sol: &crate::ipm::NamedSolution,
    activation: &[f64],
    out: &mut RunOutput,
    solve_secs: f64,
    t_total: Instant,
) {
    let ex = validate::exactness(&sc.network, prog, idx, sol);
    out.exactness = Some(ex.exactness);
    let ms = idx.extract(&sc.network, sol);
    let cert = validate::certificate(
        &sc.network,
        activation,
        &ms,
        sc.model.objective_tanks.as_deref(),
        Some(&ex),
    )
    .ok();
    let kkt = validate::kkt_residuals(&sc.network, activation, prog, idx, sol).ok();
    let ode_res = sc
        .network
        .assemble_matrices(activation)
        .map(|mats| validate::steady_residual(&sc.network, &mats, &ms.s, &ms.x))
        .ok();
    if let Some(dir) = out_dir {
        let path = dir.join("solution.csv");
        if report::write_solution_csv(&path, &sc.network, &ms, &ex).is_ok() {
            out.files.push(path);
        }
        let path = dir.join("validation.csv");
        if report::write_validation_csv(&path, &ex, cert.as_ref(), kkt.as_ref(), ode_res).is_ok() {
            out.files.push(path);
        }
        let path = dir.join("timing.csv");
        if report::write_timing_csv(
            &path,
            &[
                ("solve", solve_secs),
                ("total", t_total.elapsed().as_secs_f64()),
            ],
        )
        .is_ok()
        {
            out.files.push(path);
        }
    }
    out.solution = Some(ms);
}

/// Multi-period run with per-period tables, input/state plots, and the
/// trajectory replay check.
fn run_dynamic(sc: &Scenario, out_dir: Option<&Path>) -> RunOutput {
    let t_total = Instant::now();
    let Some(dyn_spec) = &sc.dynamic else {
        return RunOutput::failure(
            &sc.name,
            EXIT_BAD_INPUT,
            "scenario has no dynamic spec".into(),
        );
    };
    let (prog, idx) = match build_dynamic(&sc.network, &sc.model, dyn_spec, &sc.omega) {
        Ok(v) => v,
        Err(e) => return RunOutput::failure(&sc.name, EXIT_BAD_INPUT, e.to_string()),
    };
    let t_solve = Instant::now();
    let sol = match solve_named(&prog, &sc.solver.to_settings()) {
        Ok(s) => s,
        Err(e) => return RunOutput::failure(&sc.name, EXIT_SOLVER_FAILURE, e.to_string()),
    };
    let solve_secs = t_solve.elapsed().as_secs_f64();
    let mut out = RunOutput {
        name: sc.name.clone(),
        status: status_name(sol.status).into(),
        exit_code: solve_exit(sol.status),
        message: String::new(),
        objective: Some(sol.objective),
        exactness: None,
        chosen_pipes: vec![],
        nodes: None,
        bound: None,
        warnings: idx.warnings.clone(),
        files: vec![],
        solution: None,
    };
    if sol.status != SolveStatus::Optimal {
        return out;
    }
    let ex = validate::exactness(&sc.network, &prog, &idx, &sol);
    out.exactness = Some(ex.exactness);
    let ms = idx.extract(&sc.network, &sol);
    let tau = dyn_spec.periods;
    let n = sc.network.n_tanks();
    let s_in: Vec<Vec<f64>> = (1..=tau)
        .map(|t| {
            (0..n)
                .map(|i| dyn_spec.s_in_signal[i].eval(t, tau))
                .collect()
        })
        .collect();
    // RK4 replay of the optimized inflow schedule
    let x_in: Vec<Vec<f64>> = (0..tau)
        .map(|t| {
            (0..n)
                .map(|i| ms.x_in.get(ms.slot(t, i)).copied().unwrap_or(0.0))
                .collect()
        })
        .collect();
    let inflows = Inflows::PerPeriod {
        s_in: &s_in,
        x_in: &x_in,
        dt_period: dyn_spec.dt_h,
    };
    let s0: Vec<f64> = (0..n).map(|i| ms.s[ms.slot(0, i)]).collect();
    let x0: Vec<f64> = (0..n).map(|i| ms.x[ms.slot(0, i)]).collect();
    let replay = validate::ode_simulate(
        &sc.network,
        &vec![0.0; sc.network.candidate_pipes().len()],
        &s0,
        &x0,
        dyn_spec.dt_h * tau as f64,
        dyn_spec.dt_h / 4.0,
        &inflows,
    );
    if let Ok(traj) = &replay {
        // largest deviation between the optimized and simulated substrate
        let mut worst: f64 = 0.0;
        for t in 0..tau {
            let sim = &traj.s[(t * 4).min(traj.s.len() - 1)];
            for i in 0..n {
                worst = worst.max((sim[i] - ms.s[ms.slot(t, i)]).abs());
            }
        }
        out.message = format!("replay max |dS| {worst:.3e}");
    }
    if let Some(dir) = out_dir {
        let path = dir.join("dynamic.csv");
        if report::write_dynamic_csv(&path, &ms, &s_in).is_ok() {
            out.files.push(path);
        }
        // input and state plots
        let times: Vec<f64> = (1..=tau).map(|t| t as f64 * dyn_spec.dt_h).collect();
        let mut input_series = Vec::new();
        let mut pts: Vec<Vec<(f64, f64)>> = Vec::new();
        for i in 0..n {
            pts.push(
                times
                    .iter()
                    .enumerate()
                    .map(|(t, &tt)| (tt, s_in[t][i]))
                    .collect(),
            );
        }
        for i in 0..n {
            pts.push(
                times
                    .iter()
                    .enumerate()
                    .map(|(t, &tt)| (tt, ms.x_in.get(ms.slot(t, i)).copied().unwrap_or(0.0)))
                    .collect(),
            );
        }
        for (i, p) in pts.iter().enumerate() {
            let name = if i < n {
                format!("s_in tank {}", i + 1)
            } else {
                format!("x_in tank {}", i - n + 1)
            };
            input_series.push(report::Series { name, points: p });
        }
        let svg = report::line_chart("inflow concentrations", "t (h)", "kg/m^3", &input_series);
        let path = dir.join("inputs.svg");
        if report::write_svg(&path, &svg).is_ok() {
            out.files.push(path);
        }
        let mut state_pts: Vec<Vec<(f64, f64)>> = Vec::new();
        for i in 0..n {
            state_pts.push(
                times
                    .iter()
                    .enumerate()
                    .map(|(t, &tt)| (tt, ms.s[ms.slot(t, i)]))
                    .collect(),
            );
        }
        for i in 0..n {
            state_pts.push(
                times
                    .iter()
                    .enumerate()
                    .map(|(t, &tt)| (tt, ms.x[ms.slot(t, i)]))
                    .collect(),
            );
        }
        for i in 0..n {
            state_pts.push(
                times
                    .iter()
                    .enumerate()
                    .map(|(t, &tt)| (tt, ms.t[ms.slot(t, i)]))
                    .collect(),
            );
        }
        let mut state_series = Vec::new();
        for (i, p) in state_pts.iter().enumerate() {
            let name = match i / n {
                0 => format!("S tank {}", i % n + 1),
                1 => format!("X tank {}", i % n + 1),
                _ => format!("T tank {}", i % n + 1),
            };
            state_series.push(report::Series { name, points: p });
        }
        let svg = report::line_chart("states and production", "t (h)", "kg/m^3", &state_series);
        let path = dir.join("states.svg");
        if report::write_svg(&path, &svg).is_ok() {
            out.files.push(path);
        }
        let path = dir.join("timing.csv");
        if report::write_timing_csv(
            &path,
            &[
                ("solve", solve_secs),
                ("total", t_total.elapsed().as_secs_f64()),
            ],
        )
        .is_ok()
        {
            out.files.push(path);
        }
        let path = dir.join("validation.csv");
        if report::write_validation_csv(&path, &ex, None, None, None).is_ok() {
            out.files.push(path);
        }
    }
    out.solution = Some(ms);
    out
}
