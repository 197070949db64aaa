//! Assembly of the optimization models: steady-state operation, binary pipe
//! design with big-Gamma disjunctions, and multi-period (Euler-discretized)
//! operation, each over one of three growth encodings.
//!
//! Constraint orientation matters for dual recovery: substrate balances are
//! stored as `(1/y) V T - (M+L) S - C s_in == 0` and biomass balances as
//! `-V T - (M+L) X - C x_in == 0`, so the reported equality duals are exactly
//! the multipliers sigma and epsilon used by the exactness certificate.

use serde::{Deserialize, Serialize};

use crate::conic::{ConicProgram, EqId, IneqId, LinExpr, SocId, VarId};
use crate::growth::{
    contois_cone, contois_underestimator, monod_constx_cone, monod_constx_underestimator,
    monod_envelope, steady_state_bounds, BoundsBox, ConeBlock, GLin, GrowthKind, GrowthRow,
    GrowthVar,
};
use crate::network::{GradostatNetwork, SystemMatrices};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Contois growth, exact cone encoding.
    Rc,
    /// Monod growth with constant biomass, exact cone encoding.
    Rmx,
    /// Monod growth through quotient envelopes over a bounding box.
    Rme,
}

impl ModelKind {
    pub fn tracks_biomass(&self) -> bool {
        !matches!(self, ModelKind::Rmx)
    }

    pub fn required_growth(&self) -> &'static str {
        match self {
            ModelKind::Rc => "contois",
            ModelKind::Rmx => "monod_constant_biomass",
            ModelKind::Rme => "monod",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Include linear lower bounds on T (steady/design only; they matter when
    /// the relaxation is inexact).
    #[serde(default = "default_true")]
    pub with_underestimators: bool,
    /// Disjunction constant for design models (default 50).
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Tanks whose production enters the objective (None = all, 0-based).
    #[serde(default)]
    pub objective_tanks: Option<Vec<usize>>,
}

fn default_true() -> bool {
    true
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            kind: ModelKind::Rc,
            with_underestimators: true,
            gamma: None,
            objective_tanks: None,
        }
    }
}

/// Operational constraint set.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct OmegaSpec {
    /// Budget on total activation cost.
    #[serde(default)]
    pub budget: Option<f64>,
    /// Per-tank cap on discharged substrate mass q_out_i S_i.
    #[serde(default)]
    pub discharge_caps: Option<Vec<f64>>,
    /// Fixed total inflow substrate mass rate; makes s_in a decision vector.
    #[serde(default)]
    pub total_substrate_allocation: Option<f64>,
    /// Force x_in = 0 everywhere.
    #[serde(default)]
    pub zero_biomass_inflow: bool,
    /// Cap on total water inflow.
    #[serde(default)]
    pub total_inflow_cap: Option<f64>,
    /// Strictness margin for washout repulsion; adds equilibrium rows.
    #[serde(default)]
    pub washout_margin: Option<f64>,
    /// Per-period cap on total biomass inflow mass (dynamic models).
    #[serde(default)]
    pub biomass_inflow_cap: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// State at the end of the horizon equals the state at the start.
    Periodic,
    /// State at t = 1 is pinned to given values.
    FixedInitial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicSpec {
    pub periods: usize,
    pub dt_h: f64,
    /// Discount per period in (0, 1].
    #[serde(default = "default_discount")]
    pub discount: f64,
    /// Per-tank inflow substrate signals (evaluated per period).
    pub s_in_signal: Vec<crate::scenario::Signal>,
    /// Whether x_in(t) is a per-period decision (otherwise zero).
    #[serde(default = "default_true")]
    pub x_in_decision: bool,
    #[serde(default = "default_boundary")]
    pub boundary: Boundary,
    /// Initial state for the fixed-initial boundary.
    #[serde(default)]
    pub initial_s: Option<Vec<f64>>,
    #[serde(default)]
    pub initial_x: Option<Vec<f64>>,
    /// Apply the biomass cap to the state X(t) instead of the inflow x_in(t).
    #[serde(default)]
    pub cap_on_state: bool,
}

fn default_discount() -> f64 {
    1.0
}

fn default_boundary() -> Boundary {
    Boundary::Periodic
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("model {model:?} requires {want} growth parameters, got {got}")]
    WrongGrowthKind {
        model: ModelKind,
        want: &'static str,
        got: &'static str,
    },
    #[error("design model requires a positive finite gamma")]
    MissingGamma,
    #[error("objective tank index {0} out of range")]
    BadObjectiveTank(usize),
    #[error("washout margin must be positive")]
    BadWashoutMargin,
    #[error("dynamic spec invalid: {0}")]
    BadDynamicSpec(String),
    #[error(transparent)]
    Network(#[from] crate::network::NetworkError),
    #[error(transparent)]
    Growth(#[from] crate::growth::GrowthError),
    #[error(transparent)]
    Conic(#[from] crate::conic::ConicError),
}

/// Where everything landed in the assembled program. Steady models have one
/// period; dynamic models index T and x_in by `t * n + i`, and the states
/// S, X by the same rule over `state_periods` periods (one extra trailing
/// state under a fixed-initial boundary).
#[derive(Clone, Debug, Default)]
pub struct ModelIndex {
    pub n_tanks: usize,
    pub periods: usize,
    pub state_periods: usize,
    pub s: Vec<VarId>,
    /// Empty when the model does not track biomass.
    pub x: Vec<VarId>,
    pub t: Vec<VarId>,
    /// Binary activations, one per candidate pipe (design models).
    pub lambda: Vec<VarId>,
    /// Candidate pipe indices into `net.pipes`, aligned with `lambda`.
    pub candidate_pipes: Vec<usize>,
    /// Water inflow variables (design models).
    pub q_in: Vec<VarId>,
    /// Decision inflow concentrations, when present.
    pub s_in: Vec<VarId>,
    pub x_in: Vec<VarId>,
    /// Disjunction auxiliaries per candidate pipe (design models).
    pub f_s: Vec<VarId>,
    pub f_x: Vec<VarId>,
    pub g_s: Vec<VarId>,
    pub g_x: Vec<VarId>,
    pub substrate_rows: Vec<EqId>,
    pub biomass_rows: Vec<EqId>,
    /// Exact growth cones (RC/RMX), per tank-period.
    pub growth_socs: Vec<SocId>,
    /// Underestimator rows per tank-period.
    pub underest_rows: Vec<Vec<IneqId>>,
    /// Equilibrium total-mass variables (washout rows).
    pub z_bar: Vec<VarId>,
    pub bounds: Option<BoundsBox>,
    pub warnings: Vec<String>,
}

impl ModelIndex {
    pub fn slot(&self, t: usize, i: usize) -> usize {
        t * self.n_tanks + i
    }
}

/// Named solution values pulled back into model space.
#[derive(Clone, Debug)]
pub struct ModelSolution {
    pub status: crate::ipm::SolveStatus,
    pub objective: f64,
    pub s: Vec<f64>,
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub lambda: Vec<f64>,
    pub q_in: Vec<f64>,
    pub s_in: Vec<f64>,
    pub x_in: Vec<f64>,
    pub n_tanks: usize,
    pub periods: usize,
}

impl ModelSolution {
    pub fn slot(&self, t: usize, i: usize) -> usize {
        t * self.n_tanks + i
    }
}

impl ModelIndex {
    pub fn extract(
        &self,
        net: &GradostatNetwork,
        sol: &crate::ipm::NamedSolution,
    ) -> ModelSolution {
        let val = |ids: &Vec<VarId>| ids.iter().map(|&v| sol.value(v)).collect::<Vec<f64>>();
        let mut x = val(&self.x);
        if x.is_empty() {
            // constant-biomass models: fill from the growth parameters
            x = (0..self.state_periods.max(1) * self.n_tanks)
                .map(|k| net.growth.x_c(k % self.n_tanks).unwrap_or(0.0))
                .collect();
        }
        ModelSolution {
            status: sol.status,
            objective: sol.objective,
            s: val(&self.s),
            x,
            t: val(&self.t),
            lambda: val(&self.lambda),
            q_in: val(&self.q_in),
            s_in: val(&self.s_in),
            x_in: val(&self.x_in),
            n_tanks: self.n_tanks,
            periods: self.periods,
        }
    }
}

fn check_kind(net: &GradostatNetwork, model: &ModelSpec) -> Result<(), ModelError> {
    let got = net.growth.kind_name();
    let want = model.kind.required_growth();
    if got != want {
        return Err(ModelError::WrongGrowthKind {
            model: model.kind,
            want,
            got,
        });
    }
    Ok(())
}

fn objective_tanks(net: &GradostatNetwork, model: &ModelSpec) -> Result<Vec<usize>, ModelError> {
    match &model.objective_tanks {
        None => Ok((0..net.n_tanks()).collect()),
        Some(list) => {
            for &i in list {
                if i >= net.n_tanks() {
                    return Err(ModelError::BadObjectiveTank(i));
                }
            }
            Ok(list.clone())
        }
    }
}

/// Splices a growth cone block into the program, mapping symbolic growth
/// variables through `resolve`. Returns (soc ids, ineq ids).
fn splice_block(
    prog: &mut ConicProgram,
    block: &ConeBlock,
    resolve: &mut dyn FnMut(&mut ConicProgram, GrowthVar) -> VarId,
) -> Result<(Vec<SocId>, Vec<IneqId>), ModelError> {
    fn to_expr(
        prog: &mut ConicProgram,
        e: &GLin,
        resolve: &mut dyn FnMut(&mut ConicProgram, GrowthVar) -> VarId,
    ) -> LinExpr {
        let mut out = LinExpr::new().plus(e.constant);
        for &(v, c) in &e.terms {
            let id = resolve(prog, v);
            out.add_term(id, c);
        }
        out
    }
    let mut socs = Vec::new();
    let mut ineqs = Vec::new();
    for row in &block.rows {
        match row {
            GrowthRow::Nonneg(e) => {
                let expr = to_expr(prog, e, resolve);
                ineqs.push(prog.add_ineq(expr)?);
            }
            GrowthRow::Zero(e) => {
                let expr = to_expr(prog, e, resolve);
                prog.add_eq(expr)?;
            }
            GrowthRow::Soc { t, u } => {
                let te = to_expr(prog, t, resolve);
                let ue = u.iter().map(|e| to_expr(prog, e, resolve)).collect();
                socs.push(prog.add_soc(te, ue)?);
            }
            GrowthRow::RotatedSoc { v, w, u } => {
                let ve = to_expr(prog, v, resolve);
                let we = to_expr(prog, w, resolve);
                let ue = u.iter().map(|e| to_expr(prog, e, resolve)).collect();
                prog.add_rotated_soc(ve, we, ue)?;
            }
        }
    }
    Ok((socs, ineqs))
}

/// Growth rows for one tank at one period. Underestimators are skipped when
/// the box is unusable (they are optional cuts); the envelope model requires
/// a finite box and errors otherwise.
#[allow(clippy::too_many_arguments)]
fn add_growth_rows(
    prog: &mut ConicProgram,
    idx: &mut ModelIndex,
    net: &GradostatNetwork,
    model: &ModelSpec,
    bounds: &BoundsBox,
    tank: usize,
    period: usize,
    underestimators: bool,
) -> Result<(), ModelError> {
    let g = &net.growth;
    let slot = idx.slot(period, tank);
    let s_id = idx.s[slot];
    let t_id = idx.t[slot];
    let x_id = idx.x.get(slot).copied();
    let suffix = if idx.periods > 1 {
        format!("@{}", period + 1)
    } else {
        String::new()
    };
    let mut resolve = |prog: &mut ConicProgram, v: GrowthVar| -> VarId {
        match v {
            GrowthVar::S(_) => s_id,
            GrowthVar::T(_) => t_id,
            GrowthVar::X(_) => x_id.expect("biomass variable required"),
            GrowthVar::Beta(i) => get_or_add(prog, &format!("beta{}{}", i + 1, suffix)),
            GrowthVar::Gamma(i) => get_or_add(prog, &format!("gam{}{}", i + 1, suffix)),
            GrowthVar::Psi(i) => get_or_add(prog, &format!("psi{}{}", i + 1, suffix)),
        }
    };
    let block = match model.kind {
        ModelKind::Rc => contois_cone(tank, g)?,
        ModelKind::Rmx => monod_constx_cone(tank, g)?,
        ModelKind::Rme => monod_envelope(tank, g, bounds)?,
    };
    let (socs, _) = splice_block(prog, &block, &mut resolve)?;
    idx.growth_socs.extend(socs);
    let mut under = Vec::new();
    if underestimators && !matches!(model.kind, ModelKind::Rme) && bounds.is_valid_for(tank) {
        let ub = match model.kind {
            ModelKind::Rc => contois_underestimator(tank, g, bounds)?,
            ModelKind::Rmx => monod_constx_underestimator(tank, g, bounds)?,
            ModelKind::Rme => unreachable!(),
        };
        let (_, ineqs) = splice_block(prog, &ub, &mut resolve)?;
        under = ineqs;
    }
    idx.underest_rows.push(under);
    Ok(())
}

fn get_or_add(prog: &mut ConicProgram, name: &str) -> VarId {
    match prog.var(name) {
        Some(v) => v,
        None => prog.add_nonneg(name).expect("fresh auxiliary"),
    }
}

fn set_objective(
    prog: &mut ConicProgram,
    idx: &ModelIndex,
    net: &GradostatNetwork,
    tanks: &[usize],
    discount: f64,
) -> Result<(), ModelError> {
    let mut obj = LinExpr::new();
    for t in 0..idx.periods {
        let w = discount.powi(t as i32 + 1);
        for &i in tanks {
            obj.add_term(idx.t[idx.slot(t, i)], w * net.tanks[i].volume_m3);
        }
    }
    prog.set_objective(obj)?;
    Ok(())
}

/// Steady-state model on a fixed topology (candidate activations supplied as
/// constants).
pub fn build_steady(
    net: &GradostatNetwork,
    model: &ModelSpec,
    omega: &OmegaSpec,
    activation: &[f64],
) -> Result<(ConicProgram, ModelIndex), ModelError> {
    check_kind(net, model)?;
    let mats = net.assemble_matrices(activation)?;
    let n = net.n_tanks();
    let tanks = objective_tanks(net, model)?;
    let mut prog = ConicProgram::new();
    let mut idx = ModelIndex {
        n_tanks: n,
        periods: 1,
        state_periods: 1,
        ..Default::default()
    };

    for i in 0..n {
        idx.s.push(prog.add_nonneg(&format!("S{}", i + 1))?);
    }
    if model.kind.tracks_biomass() {
        for i in 0..n {
            idx.x.push(prog.add_nonneg(&format!("X{}", i + 1))?);
        }
    }
    for i in 0..n {
        idx.t.push(prog.add_nonneg(&format!("T{}", i + 1))?);
    }

    // inflow substrate: constants, or decisions under a mass allocation
    let s_in_exprs = make_s_in(&mut prog, &mut idx, net, omega, Some(&mats.q_in))?;
    let bounds = bounds_for(net, omega, &s_in_exprs, &mats);

    let ml = mats.ml();
    let y = net.growth.y;
    for i in 0..n {
        // (1/y) V T - (M+L) S - C s_in == 0
        let mut row = LinExpr::new().term(idx.t[i], mats.v[(i, i)] / y);
        for j in 0..n {
            row.add_term(idx.s[j], -ml[(i, j)]);
        }
        let row = expr_axpy(row, -mats.q_in[i], &s_in_exprs[i]);
        idx.substrate_rows.push(prog.add_eq(row)?);
    }
    if model.kind.tracks_biomass() {
        let x_in = effective_x_in(net, omega);
        for i in 0..n {
            // -V T - (M+L) X - C x_in == 0
            let mut row = LinExpr::new().term(idx.t[i], -mats.v[(i, i)]);
            for j in 0..n {
                row.add_term(idx.x[j], -ml[(i, j)]);
            }
            let row = row.plus(-mats.q_in[i] * x_in[i]);
            idx.biomass_rows.push(prog.add_eq(row)?);
        }
    }

    for i in 0..n {
        add_growth_rows(
            &mut prog,
            &mut idx,
            net,
            model,
            &bounds,
            i,
            0,
            model.with_underestimators,
        )?;
    }
    idx.bounds = Some(bounds);

    add_shared_omega_rows(&mut prog, &mut idx, net, omega, &mats, &s_in_exprs, None)?;
    set_objective(&mut prog, &idx, net, &tanks, 1.0)?;
    Ok((prog, idx))
}

/// Binary pipe-design model: activation binaries, one-way rows, big-Gamma
/// disjunctions for the flow and diffusion products, rewritten balances, and
/// the budget row. When the substrate inflow is a decision vector, the
/// inflow mass products get their own disjunction auxiliaries.
pub fn build_design(
    net: &GradostatNetwork,
    model: &ModelSpec,
    omega: &OmegaSpec,
) -> Result<(ConicProgram, ModelIndex), ModelError> {
    check_kind(net, model)?;
    let gamma = model.gamma.unwrap_or(50.0);
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(ModelError::MissingGamma);
    }
    let n = net.n_tanks();
    let tanks = objective_tanks(net, model)?;
    // validates the all-off topology; q_out and volumes are activation-free
    let mats = net.assemble_matrices(&vec![0.0; net.candidate_pipes().len()])?;
    let mut prog = ConicProgram::new();
    let mut idx = ModelIndex {
        n_tanks: n,
        periods: 1,
        state_periods: 1,
        ..Default::default()
    };
    idx.candidate_pipes = net.candidate_pipes();
    let cand = idx.candidate_pipes.clone();
    let track_x = model.kind.tracks_biomass();

    for i in 0..n {
        idx.s.push(prog.add_nonneg(&format!("S{}", i + 1))?);
    }
    if track_x {
        for i in 0..n {
            idx.x.push(prog.add_nonneg(&format!("X{}", i + 1))?);
        }
    }
    for i in 0..n {
        idx.t.push(prog.add_nonneg(&format!("T{}", i + 1))?);
    }
    for i in 0..n {
        idx.q_in.push(prog.add_nonneg(&format!("qin{}", i + 1))?);
    }
    for &pi in &cand {
        let p = &net.pipes[pi];
        let lam = prog.add_variable(&format!("lam_{}_{}", p.from + 1, p.to + 1), 0.0, 1.0)?;
        prog.mark_binary(lam)?;
        idx.lambda.push(lam);
    }

    let s_in_exprs = make_s_in(&mut prog, &mut idx, net, omega, None)?;
    let s_in_decision = !idx.s_in.is_empty();
    let bounds = bounds_for(net, omega, &s_in_exprs, &mats);
    audit_gamma(&mut idx, net, gamma, &bounds);

    // steady-state box rows: valid at every activation, never binding at the
    // optimum, and they sharpen the continuous relaxations of the nodes
    for i in 0..n {
        if bounds.s_hi[i].is_finite() {
            prog.add_ineq(LinExpr::new().term(idx.s[i], -1.0).plus(bounds.s_hi[i]))?;
        }
        if track_x && bounds.x_hi[i].is_finite() {
            prog.add_ineq(LinExpr::new().term(idx.x[i], -1.0).plus(bounds.x_hi[i]))?;
            prog.add_ineq(LinExpr::new().term(idx.x[i], 1.0).plus(-bounds.x_lo[i]))?;
        }
    }

    // one-way rows for opposite candidate pairs
    for (a, &pa) in cand.iter().enumerate() {
        for (b, &pb) in cand.iter().enumerate().skip(a + 1) {
            let (fa, fb) = (&net.pipes[pa], &net.pipes[pb]);
            if fa.from == fb.to && fa.to == fb.from {
                prog.add_ineq(
                    LinExpr::new()
                        .term(idx.lambda[a], -1.0)
                        .term(idx.lambda[b], -1.0)
                        .plus(1.0),
                )?;
            }
        }
    }

    // flow/diffusion disjunction auxiliaries
    let mut h_src: Vec<Option<VarId>> = vec![None; cand.len()];
    let mut h_dst: Vec<Option<VarId>> = vec![None; cand.len()];
    for (k, &pi) in cand.iter().enumerate() {
        let p = &net.pipes[pi];
        let tag = format!("_{}_{}", p.from + 1, p.to + 1);
        let lam = idx.lambda[k];
        let fs = prog.add_nonneg(&format!("FS{tag}"))?;
        idx.f_s.push(fs);
        add_disjunction(
            &mut prog,
            gamma,
            (0.0, p.q1_m3_per_h * bounds.s_hi[p.from]),
            lam,
            fs,
            LinExpr::new().term(idx.s[p.from], p.q1_m3_per_h),
        )?;
        let gs = prog.add_free(&format!("GS{tag}"))?;
        idx.g_s.push(gs);
        add_disjunction(
            &mut prog,
            gamma,
            (
                -p.d1_m3_per_h * bounds.s_hi[p.to],
                p.d1_m3_per_h * bounds.s_hi[p.from],
            ),
            lam,
            gs,
            LinExpr::new()
                .term(idx.s[p.from], p.d1_m3_per_h)
                .term(idx.s[p.to], -p.d1_m3_per_h),
        )?;
        if track_x {
            let fx = prog.add_nonneg(&format!("FX{tag}"))?;
            idx.f_x.push(fx);
            add_disjunction(
                &mut prog,
                gamma,
                (
                    p.q1_m3_per_h * bounds.x_lo[p.from],
                    p.q1_m3_per_h * bounds.x_hi[p.from],
                ),
                lam,
                fx,
                LinExpr::new().term(idx.x[p.from], p.q1_m3_per_h),
            )?;
            let gx = prog.add_free(&format!("GX{tag}"))?;
            idx.g_x.push(gx);
            add_disjunction(
                &mut prog,
                gamma,
                (
                    p.d1_m3_per_h * (bounds.x_lo[p.from] - bounds.x_hi[p.to]),
                    p.d1_m3_per_h * (bounds.x_hi[p.from] - bounds.x_lo[p.to]),
                ),
                lam,
                gx,
                LinExpr::new()
                    .term(idx.x[p.from], p.d1_m3_per_h)
                    .term(idx.x[p.to], -p.d1_m3_per_h),
            )?;
        }
        if s_in_decision {
            // inflow mass products lam * q1 * s_in at both endpoints
            let (_, hi_f) = prog.bounds(idx.s_in[p.from]);
            let (_, hi_t) = prog.bounds(idx.s_in[p.to]);
            let hs = prog.add_nonneg(&format!("HS1{tag}"))?;
            add_disjunction(
                &mut prog,
                gamma,
                (0.0, p.q1_m3_per_h * hi_f),
                lam,
                hs,
                LinExpr::new().term(idx.s_in[p.from], p.q1_m3_per_h),
            )?;
            h_src[k] = Some(hs);
            let hd = prog.add_nonneg(&format!("HS2{tag}"))?;
            add_disjunction(
                &mut prog,
                gamma,
                (0.0, p.q1_m3_per_h * hi_t),
                lam,
                hd,
                LinExpr::new().term(idx.s_in[p.to], p.q1_m3_per_h),
            )?;
            h_dst[k] = Some(hd);
        }
    }

    // water balance: q_in - q_out - sum_out (q0 + lam q1) + sum_in (q0 + lam q1) == 0
    for i in 0..n {
        let mut row = LinExpr::var(idx.q_in[i]).plus(-net.tanks[i].q_out_m3_per_h);
        for (pi, p) in net.pipes.iter().enumerate() {
            let lam = cand.iter().position(|&c| c == pi).map(|k| idx.lambda[k]);
            if p.to == i {
                row = row.plus(p.q0_m3_per_h);
                if let Some(l) = lam {
                    row.add_term(l, p.q1_m3_per_h);
                }
            }
            if p.from == i {
                row = row.plus(-p.q0_m3_per_h);
                if let Some(l) = lam {
                    row.add_term(l, -p.q1_m3_per_h);
                }
            }
        }
        prog.add_eq(row)?;
        if let Some(q) = net.tanks[i].q_in_m3_per_h {
            prog.add_eq(LinExpr::var(idx.q_in[i]).plus(-q))?;
        }
    }

    // inflow substrate mass per tank, linear in the decision variables
    let q_in_ids = idx.q_in.clone();
    let s_in_ids = idx.s_in.clone();
    let inflow_mass = |i: usize| -> LinExpr {
        if !s_in_decision {
            // constant concentration times the q_in variable
            LinExpr::new().term(q_in_ids[i], net.tanks[i].s_in_kg_per_m3)
        } else {
            // q_in determined by the activations: expand the product through
            // the H auxiliaries
            let mut base = net.tanks[i].q_out_m3_per_h;
            let mut row = LinExpr::new();
            for (pi, p) in net.pipes.iter().enumerate() {
                let k = cand.iter().position(|&c| c == pi);
                if p.from == i {
                    base += p.q0_m3_per_h;
                    if let Some(k) = k {
                        row.add_term(h_src[k].unwrap(), 1.0);
                    }
                }
                if p.to == i {
                    base -= p.q0_m3_per_h;
                    if let Some(k) = k {
                        row.add_term(h_dst[k].unwrap(), -1.0);
                    }
                }
            }
            row.add_term(s_in_ids[i], base);
            row
        }
    };

    // substrate and biomass balances with per-pipe expansion
    let y = net.growth.y;
    for i in 0..n {
        let mut row =
            balance_row_design(net, &idx, i, mats.v[(i, i)] / y, &idx.s, &idx.f_s, &idx.g_s);
        let inflow = inflow_mass(i);
        for &(v, c) in &inflow.terms {
            row.add_term(v, -c);
        }
        let row = row.plus(-inflow.constant);
        idx.substrate_rows.push(prog.add_eq(row)?);
    }
    if track_x {
        let x_in = effective_x_in(net, omega);
        for i in 0..n {
            let mut row =
                balance_row_design(net, &idx, i, -mats.v[(i, i)], &idx.x, &idx.f_x, &idx.g_x);
            row.add_term(idx.q_in[i], -x_in[i]);
            idx.biomass_rows.push(prog.add_eq(row)?);
        }
    }

    for i in 0..n {
        add_growth_rows(
            &mut prog,
            &mut idx,
            net,
            model,
            &bounds,
            i,
            0,
            model.with_underestimators,
        )?;
    }
    idx.bounds = Some(bounds);

    if let Some(b) = omega.budget {
        let mut row = LinExpr::new().plus(b);
        for (k, &pi) in cand.iter().enumerate() {
            row.add_term(idx.lambda[k], -net.pipes[pi].cost);
        }
        prog.add_ineq(row)?;
    }
    // allocation row over the expanded inflow mass
    if let Some(total) = omega.total_substrate_allocation {
        let mut row = LinExpr::new().plus(-total);
        for i in 0..n {
            let inflow = inflow_mass(i);
            for &(v, c) in &inflow.terms {
                row.add_term(v, c);
            }
            row = row.plus(inflow.constant);
        }
        prog.add_eq(row)?;
    }
    let q_in_for_omega = idx.q_in.clone();
    add_shared_omega_rows(
        &mut prog,
        &mut idx,
        net,
        omega,
        &mats,
        &s_in_exprs,
        Some(&q_in_for_omega),
    )?;
    set_objective(&mut prog, &idx, net, &tanks, 1.0)?;
    Ok((prog, idx))
}

/// Multi-period model with explicit-Euler balances on a fixed topology.
/// Inflow substrate follows the given per-tank signals; inflow biomass is a
/// per-period decision (or zero). The envelope encoding is not available
/// here: its bounding box is a steady-state result.
pub fn build_dynamic(
    net: &GradostatNetwork,
    model: &ModelSpec,
    dyn_spec: &DynamicSpec,
    omega: &OmegaSpec,
) -> Result<(ConicProgram, ModelIndex), ModelError> {
    check_kind(net, model)?;
    if matches!(model.kind, ModelKind::Rme) {
        return Err(ModelError::BadDynamicSpec(
            "the envelope model needs steady-state variable bounds; use rc or rmx".into(),
        ));
    }
    if dyn_spec.periods == 0 || !(dyn_spec.dt_h > 0.0) {
        return Err(ModelError::BadDynamicSpec(
            "periods >= 1 and dt > 0 required".into(),
        ));
    }
    if !(dyn_spec.discount > 0.0 && dyn_spec.discount <= 1.0) {
        return Err(ModelError::BadDynamicSpec(
            "discount must lie in (0, 1]".into(),
        ));
    }
    if dyn_spec.s_in_signal.len() != net.n_tanks() {
        return Err(ModelError::BadDynamicSpec(
            "one s_in signal per tank required".into(),
        ));
    }
    let fixed_initial = matches!(dyn_spec.boundary, Boundary::FixedInitial);
    if fixed_initial
        && (dyn_spec.initial_s.is_none()
            || (model.kind.tracks_biomass() && dyn_spec.initial_x.is_none()))
    {
        return Err(ModelError::BadDynamicSpec(
            "fixed-initial boundary needs initial state".into(),
        ));
    }
    let mats = net.assemble_matrices(&vec![0.0; net.candidate_pipes().len()])?;
    let n = net.n_tanks();
    let tau = dyn_spec.periods;
    let state_periods = if fixed_initial { tau + 1 } else { tau };
    let tanks = objective_tanks(net, model)?;
    let mut prog = ConicProgram::new();
    let mut idx = ModelIndex {
        n_tanks: n,
        periods: tau,
        state_periods,
        ..Default::default()
    };
    let track_x = model.kind.tracks_biomass();

    for t in 0..state_periods {
        for i in 0..n {
            idx.s
                .push(prog.add_nonneg(&format!("S{}@{}", i + 1, t + 1))?);
        }
    }
    if track_x {
        for t in 0..state_periods {
            for i in 0..n {
                idx.x
                    .push(prog.add_nonneg(&format!("X{}@{}", i + 1, t + 1))?);
            }
        }
    }
    for t in 0..tau {
        for i in 0..n {
            idx.t
                .push(prog.add_nonneg(&format!("T{}@{}", i + 1, t + 1))?);
        }
    }
    if dyn_spec.x_in_decision {
        for t in 0..tau {
            for i in 0..n {
                idx.x_in
                    .push(prog.add_nonneg(&format!("xin{}@{}", i + 1, t + 1))?);
            }
        }
    }

    if fixed_initial {
        let s0 = dyn_spec.initial_s.as_ref().unwrap();
        for i in 0..n {
            prog.add_eq(LinExpr::var(idx.s[i]).plus(-s0[i]))?;
        }
        if track_x {
            let x0 = dyn_spec.initial_x.as_ref().unwrap();
            for i in 0..n {
                prog.add_eq(LinExpr::var(idx.x[i]).plus(-x0[i]))?;
            }
        }
    }

    let ml = mats.ml();
    let y = net.growth.y;
    let dt = dyn_spec.dt_h;
    for t in 0..tau {
        let tnext = if t + 1 == tau && !fixed_initial {
            0
        } else {
            t + 1
        };
        for i in 0..n {
            // V (S(t+1) - S(t))/dt + (1/y) V T(t) - (M+L) S(t) - C s_in(t) == 0
            let vii = mats.v[(i, i)];
            let mut row = LinExpr::new().term(idx.t[idx.slot(t, i)], vii / y);
            row.add_term(idx.s[idx.slot(tnext, i)], vii / dt);
            row.add_term(idx.s[idx.slot(t, i)], -vii / dt);
            for j in 0..n {
                row.add_term(idx.s[idx.slot(t, j)], -ml[(i, j)]);
            }
            let sin_ti = dyn_spec.s_in_signal[i].eval(t + 1, tau);
            let row = row.plus(-mats.q_in[i] * sin_ti);
            idx.substrate_rows.push(prog.add_eq(row)?);
            if track_x {
                let mut row = LinExpr::new().term(idx.t[idx.slot(t, i)], -vii);
                row.add_term(idx.x[idx.slot(tnext, i)], vii / dt);
                row.add_term(idx.x[idx.slot(t, i)], -vii / dt);
                for j in 0..n {
                    row.add_term(idx.x[idx.slot(t, j)], -ml[(i, j)]);
                }
                if dyn_spec.x_in_decision {
                    row.add_term(idx.x_in[idx.slot(t, i)], -mats.q_in[i]);
                }
                idx.biomass_rows.push(prog.add_eq(row)?);
            }
        }
    }

    let bounds = steady_state_bounds(&net.growth, &net.s_in(), &net.x_in());
    for t in 0..tau {
        for i in 0..n {
            // underestimators are steady-state cuts; never applied here
            add_growth_rows(&mut prog, &mut idx, net, model, &bounds, i, t, false)?;
        }
    }

    if let Some(cap) = omega.biomass_inflow_cap {
        for t in 0..tau {
            let mut row = LinExpr::new().plus(cap);
            for i in 0..n {
                if dyn_spec.cap_on_state && track_x {
                    row.add_term(idx.x[idx.slot(t, i)], -mats.q_in[i]);
                } else if dyn_spec.x_in_decision {
                    row.add_term(idx.x_in[idx.slot(t, i)], -mats.q_in[i]);
                }
            }
            prog.add_ineq(row)?;
        }
    }

    set_objective(&mut prog, &idx, net, &tanks, dyn_spec.discount)?;
    Ok((prog, idx))
}

/// Washout-repulsion rows: the total-mass equilibrium becomes a decision
/// vector `zb` with `(M+L) zb + C (x_in + y s_in) = 0`, and each tank needs
/// the growth rate at zero biomass to clear the local dilution with margin
/// `delta`. At zero biomass the ratio-limited rate is the constant mu_max;
/// the substrate-limited rate gives a cone row of the constant-biomass shape.
pub fn add_washout_repulsion_rows(
    prog: &mut ConicProgram,
    idx: &mut ModelIndex,
    net: &GradostatNetwork,
    mats: &SystemMatrices,
    delta: f64,
    s_in_exprs: &[LinExpr],
) -> Result<(), ModelError> {
    if !(delta > 0.0) {
        return Err(ModelError::BadWashoutMargin);
    }
    let n = net.n_tanks();
    let g = &net.growth;
    let y = g.y;
    let mu = g.mu_max_per_h;
    let k = g.k;
    for i in 0..n {
        idx.z_bar.push(prog.add_nonneg(&format!("zbar{}", i + 1))?);
    }
    let ml = mats.ml();
    let x_in = net.x_in();
    for i in 0..n {
        let mut row = LinExpr::new();
        for j in 0..n {
            row.add_term(idx.z_bar[j], ml[(i, j)]);
        }
        let row = row.plus(mats.q_in[i] * x_in[i]);
        let row = expr_axpy(row, mats.q_in[i] * y, &s_in_exprs[i]);
        prog.add_eq(row)?;
    }
    for i in 0..n {
        let rhs = delta - mats.m[(i, i)] - mats.l[(i, i)];
        match g.kind {
            GrowthKind::Contois => {
                // rate at zero biomass is the constant mu_max
                prog.add_ineq(LinExpr::constant(mu - rhs))?;
            }
            GrowthKind::Monod | GrowthKind::MonodConstantBiomass { .. } => {
                if rhs <= 0.0 {
                    continue;
                }
                // mu (zb/y) / (K + zb/y) >= rhs, hyperbolic with T pinned
                let sh = LinExpr::new().term(idx.z_bar[i], mu / y);
                let th = LinExpr::constant(k * rhs);
                let radius = LinExpr::new()
                    .term(idx.z_bar[i], mu / y)
                    .plus(mu * k - k * rhs);
                prog.add_soc(radius, vec![sh.clone(), th, LinExpr::constant(mu * k)])?;
                prog.add_ineq(sh.plus(-k * rhs))?;
            }
        }
    }
    Ok(())
}

// --- helpers ---

/// row += scale * expr
fn expr_axpy(row: LinExpr, scale: f64, expr: &LinExpr) -> LinExpr {
    let mut row = row.plus(scale * expr.constant);
    for &(v, c) in &expr.terms {
        row.add_term(v, scale * c);
    }
    row
}

fn effective_x_in(net: &GradostatNetwork, omega: &OmegaSpec) -> Vec<f64> {
    if omega.zero_biomass_inflow {
        vec![0.0; net.n_tanks()]
    } else {
        net.x_in()
    }
}

/// Inflow substrate concentrations as expressions. With a mass allocation
/// they become bounded decision variables; in steady models the allocation
/// equality over constant inflows is added here.
fn make_s_in(
    prog: &mut ConicProgram,
    idx: &mut ModelIndex,
    net: &GradostatNetwork,
    omega: &OmegaSpec,
    steady_q_in: Option<&[f64]>,
) -> Result<Vec<LinExpr>, ModelError> {
    let n = net.n_tanks();
    let mut exprs = Vec::with_capacity(n);
    if let Some(total) = omega.total_substrate_allocation {
        let mut alloc_row = LinExpr::new().plus(-total);
        for i in 0..n {
            let cap = match steady_q_in {
                Some(q) if q[i] > 0.0 => total / q[i],
                _ => f64::INFINITY,
            };
            let v = prog.add_variable(&format!("sin{}", i + 1), 0.0, cap)?;
            idx.s_in.push(v);
            exprs.push(LinExpr::var(v));
            if let Some(q) = steady_q_in {
                alloc_row.add_term(v, q[i]);
            }
        }
        if steady_q_in.is_some() {
            prog.add_eq(alloc_row)?;
        }
    } else {
        for i in 0..n {
            exprs.push(LinExpr::constant(net.tanks[i].s_in_kg_per_m3));
        }
    }
    Ok(exprs)
}

/// Steady-state variable bounds from the inflow data (decision inflows use
/// their caps; infinite caps leave the box unusable and downstream code
/// skips the optional cuts).
fn bounds_for(
    net: &GradostatNetwork,
    omega: &OmegaSpec,
    s_in_exprs: &[LinExpr],
    _mats: &SystemMatrices,
) -> BoundsBox {
    let n = net.n_tanks();
    let mut s_in_hi = vec![0.0; n];
    for (i, e) in s_in_exprs.iter().enumerate() {
        if e.terms.is_empty() {
            s_in_hi[i] = e.constant;
        } else {
            s_in_hi[i] = f64::INFINITY; // refined by caps below when possible
        }
    }
    let x_in = effective_x_in(net, omega);
    steady_state_bounds(&net.growth, &s_in_hi, &x_in)
}

fn balance_row_design(
    net: &GradostatNetwork,
    idx: &ModelIndex,
    i: usize,
    t_coeff: f64,
    conc: &[VarId],
    f_aux: &[VarId],
    g_aux: &[VarId],
) -> LinExpr {
    let mut row = LinExpr::new().term(idx.t[i], t_coeff);
    row.add_term(conc[i], net.tanks[i].q_out_m3_per_h);
    for (pi, p) in net.pipes.iter().enumerate() {
        let k = idx.candidate_pipes.iter().position(|&c| c == pi);
        if p.from == i {
            row.add_term(conc[i], p.q0_m3_per_h + p.d0_m3_per_h);
            row.add_term(conc[p.to], -p.d0_m3_per_h);
            if let Some(k) = k {
                row.add_term(f_aux[k], 1.0);
                row.add_term(g_aux[k], 1.0);
            }
        }
        if p.to == i {
            row.add_term(conc[p.from], -(p.q0_m3_per_h + p.d0_m3_per_h));
            row.add_term(conc[i], p.d0_m3_per_h);
            if let Some(k) = k {
                row.add_term(f_aux[k], -1.0);
                row.add_term(g_aux[k], -1.0);
            }
        }
    }
    row
}

/// Disjunction rows for `aux = lam * expr`: the paired absolute-value rows
/// `lam Gamma >= |aux|` and `(1-lam) Gamma >= |expr - aux|` (four linear
/// inequalities), plus, when the attainable range [lo, hi] of `expr` is
/// finite, the exact product-envelope rows
/// `lam lo <= aux <= lam hi` and `expr - (1-lam) hi <= aux <= expr - (1-lam) lo`.
/// Binary points are unaffected; continuous relaxations sharpen to the hull
/// of the disjunction.
fn add_disjunction(
    prog: &mut ConicProgram,
    gamma: f64,
    range: (f64, f64),
    lam: VarId,
    aux: VarId,
    expr: LinExpr,
) -> Result<(), ModelError> {
    let (lo, hi) = range;
    prog.add_ineq(LinExpr::new().term(lam, gamma).term(aux, -1.0))?;
    prog.add_ineq(LinExpr::new().term(lam, gamma).term(aux, 1.0))?;
    let mut up = LinExpr::new().term(lam, -gamma).term(aux, 1.0).plus(gamma);
    for &(v, c) in &expr.terms {
        up.add_term(v, -c);
    }
    prog.add_ineq(up.plus(-expr.constant))?;
    let mut dn = LinExpr::new().term(lam, -gamma).term(aux, -1.0).plus(gamma);
    for &(v, c) in &expr.terms {
        dn.add_term(v, c);
    }
    prog.add_ineq(dn.plus(expr.constant))?;
    if lo.is_finite() && hi.is_finite() {
        // aux <= lam hi, aux >= lam lo
        prog.add_ineq(LinExpr::new().term(lam, hi).term(aux, -1.0))?;
        prog.add_ineq(LinExpr::new().term(aux, 1.0).term(lam, -lo))?;
        // aux <= expr - (1 - lam) lo, i.e. expr + lam lo - lo - aux >= 0
        let mut r = LinExpr::new()
            .term(aux, -1.0)
            .term(lam, lo)
            .plus(expr.constant - lo);
        for &(v, c) in &expr.terms {
            r.add_term(v, c);
        }
        prog.add_ineq(r)?;
        // aux >= expr - (1 - lam) hi, i.e. aux - expr - lam hi + hi >= 0
        let mut r = LinExpr::new()
            .term(aux, 1.0)
            .term(lam, -hi)
            .plus(-expr.constant + hi);
        for &(v, c) in &expr.terms {
            r.add_term(v, -c);
        }
        prog.add_ineq(r)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn add_shared_omega_rows(
    prog: &mut ConicProgram,
    idx: &mut ModelIndex,
    net: &GradostatNetwork,
    omega: &OmegaSpec,
    mats: &SystemMatrices,
    s_in_exprs: &[LinExpr],
    design_q_in: Option<&[VarId]>,
) -> Result<(), ModelError> {
    let n = net.n_tanks();
    if let Some(caps) = &omega.discharge_caps {
        for t in 0..idx.periods {
            for i in 0..n {
                let cap = caps.get(i).copied().unwrap_or(f64::INFINITY);
                if cap.is_finite() {
                    prog.add_ineq(
                        LinExpr::new()
                            .term(idx.s[idx.slot(t, i)], -net.tanks[i].q_out_m3_per_h)
                            .plus(cap),
                    )?;
                }
            }
        }
    }
    if let Some(cap) = omega.total_inflow_cap {
        match design_q_in {
            Some(q_in) => {
                let mut row = LinExpr::new().plus(cap);
                for &q in q_in {
                    row.add_term(q, -1.0);
                }
                prog.add_ineq(row)?;
            }
            None => {
                // fixed topology: a constant row, infeasible when violated
                let total: f64 = mats.q_in.iter().sum();
                prog.add_ineq(LinExpr::constant(cap - total))?;
            }
        }
    }
    if let Some(delta) = omega.washout_margin {
        add_washout_repulsion_rows(prog, idx, net, mats, delta, s_in_exprs)?;
    }
    Ok(())
}

fn audit_gamma(idx: &mut ModelIndex, net: &GradostatNetwork, gamma: f64, bounds: &BoundsBox) {
    let s_hi = bounds.s_hi.iter().cloned().fold(0.0f64, f64::max);
    let x_hi = bounds.x_hi.iter().cloned().fold(0.0f64, f64::max);
    if !s_hi.is_finite() || !x_hi.is_finite() {
        idx.warnings
            .push("variable bounds unavailable; gamma audit skipped".into());
        return;
    }
    for &pi in &idx.candidate_pipes {
        let p = &net.pipes[pi];
        let need = (p.q1_m3_per_h * s_hi)
            .max(p.d1_m3_per_h * s_hi)
            .max(p.q1_m3_per_h * x_hi)
            .max(p.d1_m3_per_h * x_hi);
        if gamma < need {
            idx.warnings.push(format!(
                "gamma {gamma} is below the attainable disjunction magnitude {need:.3} on pipe {}->{}",
                p.from + 1,
                p.to + 1
            ));
        }
    }
}
