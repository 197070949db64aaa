//! Module-level invariants beyond the acceptance criteria: compartmental
//! identities on arbitrary networks, lifting round trips, solver stability,
//! Euler refinement behavior, disjunction audits, and washout-margin rows.

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use gradsoc::bnb::{solve_mixed, BnbSettings, BnbStatus};
use gradsoc::conic::{ConicProgram, LinExpr};
use gradsoc::growth::{GrowthKind, GrowthParams};
use gradsoc::ipm::{solve_named, SolveSettings, SolveStatus};
use gradsoc::models::{
    build_design, build_dynamic, build_steady, Boundary, DynamicSpec, ModelKind, ModelSpec,
    OmegaSpec,
};
use gradsoc::network::{GradostatNetwork, Pipe, Tank};
use gradsoc::scenario::{four_tank, Signal};

fn growth() -> GrowthParams {
    GrowthParams {
        mu_max_per_h: 1.0,
        k: 1.0,
        y: 1.0,
        kind: GrowthKind::Contois,
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    /// Water conservation identities hold for any assembled network.
    #[test]
    fn water_balance_identities(
        n in 2usize..6,
        seed in any::<u64>(),
    ) {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut pipes = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.random_bool(0.5) {
                    pipes.push(Pipe {
                        from: i,
                        to: j,
                        q0_m3_per_h: rng.random_range(0.0..1.5),
                        q1_m3_per_h: 0.0,
                        d0_m3_per_h: rng.random_range(0.0..0.5),
                        d1_m3_per_h: 0.0,
                        cost: 0.0,
                        candidate: false,
                    });
                }
            }
        }
        let tanks: Vec<Tank> = (0..n).map(|_| Tank {
            volume_m3: rng.random_range(0.5..4.0),
            q_out_m3_per_h: rng.random_range(0.0..2.0) + 3.0,
            q_in_m3_per_h: None,
            s_in_kg_per_m3: 1.0,
            x_in_kg_per_m3: 1.0,
        }).collect();
        let net = GradostatNetwork { tanks, pipes, growth: growth() };
        // discard draws whose balance needs a negative inflow
        let mats = match net.assemble_matrices(&[]) {
            Ok(m) => m,
            Err(_) => return Ok(()),
        };
        for i in 0..n {
            let row: f64 = (0..n).map(|j| mats.m[(i, j)]).sum::<f64>() + mats.q_in[i];
            prop_assert!(row.abs() < 1e-10);
            let col: f64 = (0..n).map(|j| mats.m[(j, i)]).sum::<f64>() + mats.q_out[i];
            prop_assert!(col.abs() < 1e-10);
            let lrow: f64 = (0..n).map(|j| mats.l[(i, j)]).sum();
            prop_assert!(lrow.abs() < 1e-10);
            for j in 0..n {
                prop_assert!((mats.l[(i, j)] - mats.l[(j, i)]).abs() < 1e-12);
                if i != j {
                    prop_assert!(mats.m[(i, j)] >= 0.0 && mats.l[(i, j)] >= 0.0);
                }
            }
        }
    }

    /// Named points survive the round trip through standard form.
    #[test]
    fn lift_primal_roundtrip(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut p = ConicProgram::new();
        let a = p.add_variable("a", -1.0, 2.0).unwrap();
        let b = p.add_nonneg("b").unwrap();
        let c = p.add_free("c").unwrap();
        let d = p.add_variable("d", f64::NEG_INFINITY, 5.0).unwrap();
        p.add_soc(LinExpr::var(b).plus(1.0), vec![LinExpr::var(a), LinExpr::var(c)]).unwrap();
        p.add_ineq(LinExpr::var(c).term(a, 0.5).plus(3.0)).unwrap();
        p.set_objective(LinExpr::var(a).term(d, -1.0)).unwrap();
        let (sf, map) = p.to_standard_form().unwrap();
        for _ in 0..16 {
            let named: Vec<f64> = vec![
                rng.random_range(-1.0..2.0),
                rng.random_range(0.0..3.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-3.0..5.0),
            ];
            let x = map.lift_point(&p, &named, sf.n_cols());
            let back = map.primal(&x);
            for (u, v) in named.iter().zip(&back) {
                prop_assert!((u - v).abs() < 1e-12);
            }
        }
    }

    /// The hyperbolic set x^2 + y^2 <= z w (z, w >= 0) matches the lifted
    /// rotated-cone encoding.
    #[test]
    fn hyperbolic_equals_lifted_cone(
        x in -3.0f64..3.0, y in -3.0f64..3.0,
        z in 0.0f64..4.0, w in 0.0f64..4.0,
    ) {
        let mut p = ConicProgram::new();
        let vx = p.add_free("x").unwrap();
        let vy = p.add_free("y").unwrap();
        let vz = p.add_nonneg("z").unwrap();
        let vw = p.add_nonneg("w").unwrap();
        p.add_rotated_soc(
            LinExpr::var(vz),
            LinExpr::var(vw),
            vec![LinExpr::var(vx).scaled(std::f64::consts::SQRT_2),
                 LinExpr::var(vy).scaled(std::f64::consts::SQRT_2)],
        ).unwrap();
        let (sf, map) = p.to_standard_form().unwrap();
        let named = vec![x, y, z, w];
        let lifted = map.lift_point(&p, &named, sf.n_cols());
        let direct = x * x + y * y <= z * w + 1e-12;
        let encoded = sf.layout.contains(&lifted, 1e-9);
        // agreement away from the boundary
        if (x * x + y * y - z * w).abs() > 1e-7 {
            prop_assert_eq!(direct, encoded);
        }
    }
}

#[test]
fn exact_growth_cone_lifts_to_one_dim4_block() {
    let g = growth();
    let net = GradostatNetwork {
        tanks: vec![Tank {
            volume_m3: 1.0,
            q_out_m3_per_h: 1.0,
            q_in_m3_per_h: None,
            s_in_kg_per_m3: 1.0,
            x_in_kg_per_m3: 1.0,
        }],
        pipes: vec![],
        growth: g,
    };
    let spec = ModelSpec {
        kind: ModelKind::Rc,
        with_underestimators: false,
        ..Default::default()
    };
    let (prog, _idx) = build_steady(&net, &spec, &OmegaSpec::default(), &[]).unwrap();
    let (sf, _map) = prog.to_standard_form().unwrap();
    assert_eq!(sf.layout.socs, vec![4], "one cone of dimension 4 expected");
}

#[test]
fn ipm_matches_grid_oracle_on_2var_programs() {
    // brute-force grid at 1e-3 resolution over [0, 2]^2
    let mut rng = StdRng::seed_from_u64(77);
    for _ in 0..4 {
        let c1: f64 = rng.random_range(-1.0..2.0);
        let c2: f64 = rng.random_range(-1.0..2.0);
        let a1: f64 = rng.random_range(0.2..1.0);
        let a2: f64 = rng.random_range(0.2..1.0);
        let rhs: f64 = rng.random_range(0.8..2.2);
        let rad: f64 = rng.random_range(0.8..2.0);
        // max c.x st a.x <= rhs, ||x - (1,1)|| <= rad, x in [0,2]^2
        let feasible = |x: f64, y: f64| {
            a1 * x + a2 * y <= rhs && ((x - 1.0).powi(2) + (y - 1.0).powi(2)).sqrt() <= rad
        };
        let mut best = f64::NEG_INFINITY;
        let steps = 2000;
        for i in 0..=steps {
            for j in 0..=steps {
                let x = 2.0 * i as f64 / steps as f64;
                let y = 2.0 * j as f64 / steps as f64;
                if feasible(x, y) {
                    best = best.max(c1 * x + c2 * y);
                }
            }
        }
        let mut p = ConicProgram::new();
        let x = p.add_variable("x", 0.0, 2.0).unwrap();
        let y = p.add_variable("y", 0.0, 2.0).unwrap();
        p.add_ineq(LinExpr::new().term(x, -a1).term(y, -a2).plus(rhs))
            .unwrap();
        p.add_soc(
            LinExpr::constant(rad),
            vec![LinExpr::var(x).plus(-1.0), LinExpr::var(y).plus(-1.0)],
        )
        .unwrap();
        p.set_objective(LinExpr::new().term(x, c1).term(y, c2))
            .unwrap();
        let sol = solve_named(&p, &SolveSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(
            (sol.objective - best).abs() <= 2e-3 * (1.0 + best.abs()),
            "ipm {} vs grid {best}",
            sol.objective
        );
    }
}

#[test]
fn solve_is_stable_under_row_permutation() {
    let sc = four_tank();
    let (prog, _idx) = build_steady(
        &sc.network,
        &sc.model,
        &OmegaSpec::default(),
        &vec![1.0; 12],
    )
    .unwrap();
    let base = solve_named(&prog, &SolveSettings::default()).unwrap();
    // rebuild with rows in reversed order; variable ids align by construction
    let mut permuted = ConicProgram::new();
    for j in 0..prog.n_vars() {
        let (lo, hi) = prog.bounds(prog.nth_var(j).unwrap());
        permuted.add_variable(&format!("p{j}"), lo, hi).unwrap();
    }
    let clone_expr = |e: &LinExpr| LinExpr {
        terms: e.terms.clone(),
        constant: e.constant,
    };
    for e in prog.eq_exprs().iter().rev() {
        permuted.add_eq(clone_expr(e)).unwrap();
    }
    for e in prog.ineq_exprs().iter().rev() {
        permuted.add_ineq(clone_expr(e)).unwrap();
    }
    for s in prog.soc_rows() {
        permuted
            .add_soc(clone_expr(&s.t), s.u.iter().map(clone_expr).collect())
            .unwrap();
    }
    for r in prog.rsoc_rows() {
        permuted
            .add_rotated_soc(
                clone_expr(&r.v),
                clone_expr(&r.w),
                r.u.iter().map(clone_expr).collect(),
            )
            .unwrap();
    }
    permuted
        .set_objective(clone_expr(prog.objective()))
        .unwrap();
    let perm = solve_named(&permuted, &SolveSettings::default()).unwrap();
    assert_eq!(perm.status, SolveStatus::Optimal);
    assert!(
        (perm.objective - base.objective).abs() <= 1e-6 * (1.0 + base.objective.abs()),
        "permuted {} vs base {}",
        perm.objective,
        base.objective
    );
}

#[test]
fn euler_objective_converges_first_order() {
    // fixed horizon, refining the step: successive objective differences
    // shrink roughly linearly in the step size
    let sc = four_tank();
    let net = {
        let mut n = sc.network.clone();
        n.pipes.clear();
        n
    };
    let spec = ModelSpec {
        kind: ModelKind::Rc,
        with_underestimators: false,
        ..Default::default()
    };
    let horizon = 8.0;
    let objective_at = |periods: usize| {
        let dyn_spec = DynamicSpec {
            periods,
            dt_h: horizon / periods as f64,
            discount: 1.0,
            s_in_signal: net
                .tanks
                .iter()
                .map(|t| Signal::constant(t.s_in_kg_per_m3))
                .collect(),
            x_in_decision: false,
            boundary: Boundary::FixedInitial,
            initial_s: Some(vec![0.5; 4]),
            initial_x: Some(vec![1.0; 4]),
            cap_on_state: false,
        };
        let (prog, _idx) = build_dynamic(&net, &spec, &dyn_spec, &OmegaSpec::default()).unwrap();
        let sol = solve_named(&prog, &SolveSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal, "{:?}", sol.residuals);
        // integral-normalized objective
        sol.objective * horizon / periods as f64
    };
    let f1 = objective_at(16);
    let f2 = objective_at(32);
    let f4 = objective_at(64);
    let d1 = (f1 - f2).abs();
    let d2 = (f2 - f4).abs();
    let ratio = d1 / d2.max(1e-12);
    assert!(
        (1.3..3.2).contains(&ratio),
        "refinement ratio {ratio} (d1 {d1:.3e}, d2 {d2:.3e}) not first order"
    );
}

#[test]
fn disjunction_audit_at_binary_feasible_solution() {
    let sc = four_tank();
    let (prog, idx) = build_design(&sc.network, &sc.model, &sc.omega).unwrap();
    let bb = solve_mixed(&prog, &BnbSettings::default()).unwrap();
    assert_eq!(bb.status, BnbStatus::Optimal);
    let sol = bb.incumbent.as_ref().unwrap();
    for (k, &pi) in idx.candidate_pipes.iter().enumerate() {
        let p = &sc.network.pipes[pi];
        let lam = sol.value(idx.lambda[k]);
        let fs = sol.value(idx.f_s[k]);
        let s_from = sol.value(idx.s[p.from]);
        if lam > 0.5 {
            assert!(
                (fs - p.q1_m3_per_h * s_from).abs() <= 1e-6,
                "active pipe {}-{} carries F {} vs {}",
                p.from + 1,
                p.to + 1,
                fs,
                p.q1_m3_per_h * s_from
            );
        } else {
            assert!(
                fs.abs() <= 1e-6,
                "inactive pipe {}-{} carries F {}",
                p.from + 1,
                p.to + 1,
                fs
            );
        }
    }
    // water balance at the incumbent: derived inflows stay nonnegative
    for i in 0..4 {
        assert!(sol.value(idx.q_in[i]) >= -1e-8);
    }
    // mass conservation at the exact solution
    let ms = idx.extract(&sc.network, sol);
    let mats = sc.network.assemble_matrices(&bb.assignment).unwrap();
    let mut inflow = 0.0;
    let mut outflow = 0.0;
    for i in 0..4 {
        inflow += mats.q_in[i] * sc.network.tanks[i].s_in_kg_per_m3;
        outflow += mats.q_out[i] * ms.s[i] + mats.v[(i, i)] * ms.t[i] / sc.network.growth.y;
    }
    assert!(
        (inflow - outflow).abs() <= 1e-6 * inflow.max(1.0),
        "ledger {inflow} vs {outflow}"
    );
}

#[test]
fn washout_margin_rows_match_scalar_oracle() {
    // single tank, substrate-limited growth with constant biomass:
    // zbar = x_in + y s_in = 2; growth rate at zero biomass 2*2/(1+2) = 4/3;
    // the margin row is feasible iff delta <= 4/3 - 1
    let net = GradostatNetwork {
        tanks: vec![Tank {
            volume_m3: 1.0,
            q_out_m3_per_h: 1.0,
            q_in_m3_per_h: None,
            s_in_kg_per_m3: 1.0,
            x_in_kg_per_m3: 1.0,
        }],
        pipes: vec![],
        growth: GrowthParams {
            mu_max_per_h: 2.0,
            k: 1.0,
            y: 1.0,
            kind: GrowthKind::MonodConstantBiomass {
                x_c_kg_per_m3: vec![1.0],
            },
        },
    };
    let spec = ModelSpec {
        kind: ModelKind::Rmx,
        ..Default::default()
    };
    let feasible = |delta: f64| {
        let omega = OmegaSpec {
            washout_margin: Some(delta),
            ..Default::default()
        };
        let (prog, _idx) = build_steady(&net, &spec, &omega, &[]).unwrap();
        let sol = solve_named(&prog, &SolveSettings::default()).unwrap();
        sol.status == SolveStatus::Optimal
    };
    assert!(feasible(0.2));
    assert!(!feasible(0.5));
    // zero margin is rejected outright
    let omega = OmegaSpec {
        washout_margin: Some(0.0),
        ..Default::default()
    };
    assert!(build_steady(&net, &spec, &omega, &[]).is_err());
}

#[test]
fn design_with_all_binaries_pinned_matches_steady() {
    let sc = four_tank();
    let (mut design, idx) = build_design(&sc.network, &sc.model, &sc.omega).unwrap();
    for &lam in &idx.lambda {
        design.set_bounds(lam, 0.0, 0.0).unwrap();
    }
    let bb = solve_mixed(&design, &BnbSettings::default()).unwrap();
    assert_eq!(bb.status, BnbStatus::Optimal);
    assert_eq!(
        bb.nodes, 1,
        "fully pinned binaries should cost a single node"
    );
    let (steady, _) = build_steady(&sc.network, &sc.model, &sc.omega, &vec![0.0; 12]).unwrap();
    let s = solve_named(&steady, &SolveSettings::default()).unwrap();
    assert!(
        (bb.objective - s.objective).abs() <= 1e-6 * (1.0 + s.objective.abs()),
        "pinned design {} vs steady {}",
        bb.objective,
        s.objective
    );
}

#[test]
fn substrate_allocation_makes_inflows_decisions() {
    // steady allocation: the optimizer shifts substrate mass across tanks
    let sc = four_tank();
    let mut net = sc.network.clone();
    net.pipes.clear();
    let total = 10.0;
    let omega = OmegaSpec {
        total_substrate_allocation: Some(total),
        ..Default::default()
    };
    let spec = ModelSpec {
        kind: ModelKind::Rc,
        ..Default::default()
    };
    let (prog, idx) = build_steady(&net, &spec, &omega, &[]).unwrap();
    let sol = solve_named(&prog, &SolveSettings::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    let mats = net.assemble_matrices(&[]).unwrap();
    let allocated: f64 = idx
        .s_in
        .iter()
        .enumerate()
        .map(|(i, &v)| mats.q_in[i] * sol.value(v))
        .sum();
    assert!(
        (allocated - total).abs() <= 1e-6 * total,
        "allocated {allocated}"
    );

    // design + allocation exercises the inflow-mass disjunctions
    let mut net2 = sc.network.clone();
    net2.pipes.truncate(4);
    let omega2 = OmegaSpec {
        budget: Some(2.0),
        total_substrate_allocation: Some(total),
        ..Default::default()
    };
    let (prog2, idx2) = build_design(&net2, &sc.model, &omega2).unwrap();
    let bb = solve_mixed(&prog2, &BnbSettings::default()).unwrap();
    assert_eq!(bb.status, BnbStatus::Optimal);
    let sol = bb.incumbent.as_ref().unwrap();
    // allocation ledger holds at the incumbent: sum q_in s_in == total
    let q_in: Vec<f64> = idx2.q_in.iter().map(|&v| sol.value(v)).collect();
    let s_in: Vec<f64> = idx2.s_in.iter().map(|&v| sol.value(v)).collect();
    let ledger: f64 = q_in.iter().zip(&s_in).map(|(q, s)| q * s).sum();
    assert!(
        (ledger - total).abs() <= 1e-5 * total,
        "inflow mass ledger {ledger} vs {total}"
    );
}

#[test]
fn omega_rows_cap_discharge_and_total_inflow() {
    let sc = four_tank();
    let mut net = sc.network.clone();
    net.pipes.clear();
    let spec = ModelSpec {
        kind: ModelKind::Rc,
        ..Default::default()
    };
    // maximizing production is minimizing discharged substrate, so the free
    // optimum already sits at the least attainable discharge: caps slightly
    // above it are respected, caps below it are infeasible
    let (free_prog, free_idx) = build_steady(&net, &spec, &OmegaSpec::default(), &[]).unwrap();
    let free_sol = solve_named(&free_prog, &SolveSettings::default()).unwrap();
    assert_eq!(free_sol.status, SolveStatus::Optimal);
    let discharges: Vec<f64> = (0..4)
        .map(|i| net.tanks[i].q_out_m3_per_h * free_sol.value(free_idx.s[i]))
        .collect();
    let loose: Vec<f64> = discharges.iter().map(|d| 1.02 * d).collect();
    let omega = OmegaSpec {
        discharge_caps: Some(loose.clone()),
        ..Default::default()
    };
    let (prog, idx) = build_steady(&net, &spec, &omega, &[]).unwrap();
    let sol = solve_named(&prog, &SolveSettings::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    for i in 0..4 {
        let discharged = net.tanks[i].q_out_m3_per_h * sol.value(idx.s[i]);
        assert!(
            discharged <= loose[i] + 1e-6,
            "tank {i} discharges {discharged}"
        );
    }
    let tight: Vec<f64> = discharges.iter().map(|d| 0.98 * d).collect();
    let omega = OmegaSpec {
        discharge_caps: Some(tight),
        ..Default::default()
    };
    let (prog, _) = build_steady(&net, &spec, &omega, &[]).unwrap();
    let sol = solve_named(&prog, &SolveSettings::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::PrimalInfeasible);
    // an unattainable total-inflow cap on a fixed topology is infeasible
    let omega = OmegaSpec {
        total_inflow_cap: Some(1.0),
        ..Default::default()
    };
    let (prog, _) = build_steady(&net, &spec, &omega, &[]).unwrap();
    let sol = solve_named(&prog, &SolveSettings::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::PrimalInfeasible);
    // forcing zero biomass inflow leaves a feasible washout-or-better model;
    // its feasible set has an empty interior, so the solver may stop short of
    // full tolerance, but it must neither declare infeasibility nor return an
    // infeasible point
    let omega = OmegaSpec {
        zero_biomass_inflow: true,
        ..Default::default()
    };
    let (prog, _) = build_steady(&net, &spec, &omega, &[]).unwrap();
    let sol = solve_named(&prog, &SolveSettings::default()).unwrap();
    assert_ne!(sol.status, SolveStatus::PrimalInfeasible);
    assert!(
        prog.constraint_violation(&sol.vars) <= 1e-6,
        "returned point violates by {:.2e}",
        prog.constraint_violation(&sol.vars)
    );
}

#[test]
fn standard_form_dump_lists_triplets() {
    let mut p = ConicProgram::new();
    let x = p.add_nonneg("x").unwrap();
    let y = p.add_nonneg("y").unwrap();
    p.add_eq(LinExpr::new().term(x, 2.0).term(y, -1.0).plus(-0.5))
        .unwrap();
    p.set_objective(LinExpr::var(x)).unwrap();
    let (sf, _) = p.to_standard_form().unwrap();
    let dump = sf.dump();
    assert!(dump.contains("standard form: 1 rows, 2 cols"));
    assert!(dump.contains("A (row col value):"));
    assert!(dump.contains("0 0 2"));
    assert!(dump.lines().count() >= 7);
}

#[test]
fn kkt_residuals_require_optimal_status() {
    // infeasible problem: the dual report refuses to guess
    let sc = four_tank();
    let mut net = sc.network.clone();
    net.pipes.clear();
    let spec = ModelSpec {
        kind: ModelKind::Rc,
        ..Default::default()
    };
    let omega = OmegaSpec {
        total_inflow_cap: Some(1.0),
        ..Default::default()
    };
    let (prog, idx) = build_steady(&net, &spec, &omega, &[]).unwrap();
    let sol = solve_named(&prog, &SolveSettings::default()).unwrap();
    assert!(matches!(
        gradsoc::validate::kkt_residuals(&net, &[], &prog, &idx, &sol),
        Err(gradsoc::validate::ValidateError::MissingDuals(_))
    ));
}
