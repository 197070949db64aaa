//! Best-bound branch-and-bound over binary variables of a conic program.
//!
//! Each node solves the continuous relaxation with a subset of binaries
//! pinned. Branching picks the most fractional binary (lowest index on
//! ties) and explores the zero branch first; a rounding heuristic probes
//! each node's relaxation for an incumbent. Nodes whose purely-binary rows
//! are already unsatisfiable under the partial fixing are pruned without a
//! solve.

use std::collections::{BinaryHeap, HashSet};

use crate::conic::{ConicProgram, VarId};
use crate::ipm::{solve_named, NamedSolution, SolveSettings, SolveStatus};

#[derive(Clone, Debug)]
pub struct BnbSettings {
    pub rel_gap: f64,
    pub abs_gap: f64,
    pub node_limit: usize,
    /// Serial, reproducible search order (kept on; reserved for a parallel
    /// evaluator).
    pub deterministic: bool,
    pub solver: SolveSettings,
    /// Tolerance for treating a relaxation value as binary.
    pub int_tol: f64,
}

impl Default for BnbSettings {
    fn default() -> Self {
        BnbSettings {
            rel_gap: 1e-6,
            abs_gap: 1e-9,
            node_limit: 1_000_000,
            deterministic: true,
            solver: SolveSettings::default(),
            int_tol: 1e-7,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnbStatus {
    Optimal,
    Infeasible,
    NodeLimit,
}

#[derive(Clone, Debug)]
pub struct NodeRecord {
    pub id: usize,
    pub depth: usize,
    pub bound: f64,
    pub incumbent: f64,
}

#[derive(Clone, Debug)]
pub struct BnbResult {
    pub status: BnbStatus,
    /// Best binary-feasible solution found.
    pub incumbent: Option<NamedSolution>,
    /// Values of the binary variables at the incumbent.
    pub assignment: Vec<f64>,
    pub objective: f64,
    /// Valid upper bound on the optimum (maximization).
    pub bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub log: Vec<NodeRecord>,
}

impl BnbResult {
    /// Line-oriented rendering of the node log.
    pub fn log_text(&self) -> String {
        let mut out = String::new();
        for r in &self.log {
            out.push_str(&format!(
                "node {} depth {} bound {:.9} incumbent {:.9}\n",
                r.id, r.depth, r.bound, r.incumbent
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BnbError {
    #[error("exhaustive enumeration supports at most {max} binaries, got {got}")]
    TooLarge { max: usize, got: usize },
    #[error(transparent)]
    Conic(#[from] crate::conic::ConicError),
}

enum NodeEval {
    /// Relaxation solved to optimality.
    Solved(Box<NamedSolution>),
    /// Unconverged solve whose final iterate verified feasible.
    FeasiblePoint(Box<NamedSolution>),
    Infeasible,
    Unresolved,
}

struct HeapNode {
    bound: f64,
    seq: usize,
    fixes: Vec<(usize, bool)>,
    depth: usize,
    relax: Option<Box<NamedSolution>>,
}

impl PartialEq for HeapNode {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.seq == other.seq
    }
}
impl Eq for HeapNode {}
impl PartialOrd for HeapNode {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapNode {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // max-heap by bound; FIFO on ties for determinism
        self.bound
            .partial_cmp(&other.bound)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(other.seq.cmp(&self.seq))
    }
}

/// Rows with (almost) purely binary support, pre-extracted so nodes whose
/// partial assignment already contradicts them are pruned without a solve.
struct BinaryRows {
    /// (coefficients over binaries, constant); row sense expr >= 0.
    ineqs: Vec<(Vec<(usize, f64)>, f64)>,
    /// Equality rows `sum a_k lam_k + c v + constant == 0` with exactly one
    /// non-binary variable v bounded to [lo, hi]: the implied interval of v
    /// must intersect its bounds.
    eq_one_var: Vec<(Vec<(usize, f64)>, f64, f64, f64, f64)>,
}

impl BinaryRows {
    fn extract(p: &ConicProgram, binaries: &[VarId]) -> Self {
        let pos: std::collections::HashMap<usize, usize> = binaries
            .iter()
            .enumerate()
            .map(|(k, v)| (v.index(), k))
            .collect();
        let mut ineqs = Vec::new();
        for row in &p.ineqs {
            let mut coeffs = Vec::new();
            let mut pure = true;
            for &(v, c) in &row.terms {
                match pos.get(&v.index()) {
                    Some(&k) => coeffs.push((k, c)),
                    None => {
                        pure = false;
                        break;
                    }
                }
            }
            if pure && !coeffs.is_empty() {
                ineqs.push((coeffs, row.constant));
            }
        }
        let mut eq_one_var = Vec::new();
        for row in &p.eqs {
            let mut coeffs = Vec::new();
            let mut extra: Option<(VarId, f64)> = None;
            let mut good = true;
            for &(v, c) in &row.terms {
                match pos.get(&v.index()) {
                    Some(&k) => coeffs.push((k, c)),
                    None => {
                        if extra.is_none() && c != 0.0 {
                            extra = Some((v, c));
                        } else {
                            good = false;
                            break;
                        }
                    }
                }
            }
            if !good || coeffs.is_empty() {
                continue;
            }
            if let Some((v, c)) = extra {
                let (lo, hi) = p.bounds(v);
                eq_one_var.push((coeffs, row.constant, c, lo, hi));
            }
        }
        BinaryRows { ineqs, eq_one_var }
    }

    /// True when some row cannot be satisfied under the partial assignment
    /// (None = still free).
    fn infeasible(&self, partial: &[Option<bool>]) -> bool {
        for (coeffs, constant) in &self.ineqs {
            let mut best = *constant;
            for &(k, c) in coeffs {
                best += match partial[k] {
                    Some(true) => c,
                    Some(false) => 0.0,
                    None => c.max(0.0),
                };
            }
            if best < -1e-12 {
                return true;
            }
        }
        for (coeffs, constant, cv, lo, hi) in &self.eq_one_var {
            // v = -(sum + constant)/cv over the free-binary interval
            let (mut smin, mut smax) = (*constant, *constant);
            for &(k, c) in coeffs {
                match partial[k] {
                    Some(true) => {
                        smin += c;
                        smax += c;
                    }
                    Some(false) => {}
                    None => {
                        smin += c.min(0.0);
                        smax += c.max(0.0);
                    }
                }
            }
            let (mut vmin, mut vmax) = (-smax / cv, -smin / cv);
            if vmin > vmax {
                std::mem::swap(&mut vmin, &mut vmax);
            }
            if vmax < lo - 1e-9 || vmin > hi + 1e-9 {
                return true;
            }
        }
        false
    }
}

fn apply_fixes(base: &ConicProgram, binaries: &[VarId], fixes: &[(usize, bool)]) -> ConicProgram {
    let mut p = base.clone();
    for &(k, v) in fixes {
        let val = if v { 1.0 } else { 0.0 };
        p.set_bounds(binaries[k], val, val).expect("binary bounds");
    }
    p
}

fn fractional(binaries: &[VarId], sol: &NamedSolution, int_tol: f64) -> Option<(usize, f64)> {
    let mut pick: Option<(usize, f64)> = None;
    for (k, &v) in binaries.iter().enumerate() {
        let val = sol.value(v);
        let frac = (val - val.round()).abs();
        if frac > int_tol {
            let dist = (val - 0.5).abs();
            if pick.map_or(true, |(_, best)| dist < best - 1e-15) {
                pick = Some((k, dist));
            }
        }
    }
    pick
}

/// Branch-and-bound over the program's binary-marked variables
/// (maximization). The relaxation must be bounded above.
/// Branch-and-bound over the program's binary-marked variables
/// (maximization). The relaxation must be bounded above.
pub fn solve_mixed(p: &ConicProgram, settings: &BnbSettings) -> Result<BnbResult, BnbError> {
    let binaries = p.binaries();
    let nb = binaries.len();
    let bin_rows = BinaryRows::extract(p, &binaries);
    let mut log = Vec::new();
    let mut nodes = 0usize;
    let mut seq = 0usize;
    let mut incumbent: Option<NamedSolution> = None;
    let mut inc_obj = f64::NEG_INFINITY;
    let mut tried_roundings: HashSet<Vec<u8>> = HashSet::new();

    let eval = |fixes: &[(usize, bool)]| -> NodeEval {
        let node_p = apply_fixes(p, &binaries, fixes);
        let classify = |sol: NamedSolution, node_p: &ConicProgram| -> NodeEval {
            match sol.status {
                SolveStatus::Optimal => NodeEval::Solved(Box::new(sol)),
                SolveStatus::PrimalInfeasible => NodeEval::Infeasible,
                _ => {
                    // an unconverged iterate still yields a usable incumbent
                    // when it verifies feasible at tolerance
                    if node_p.is_feasible(&sol.vars, 1e-7) {
                        NodeEval::FeasiblePoint(Box::new(sol))
                    } else {
                        NodeEval::Unresolved
                    }
                }
            }
        };
        match solve_named(&node_p, &settings.solver) {
            Ok(sol) if sol.status == SolveStatus::Optimal => NodeEval::Solved(Box::new(sol)),
            Ok(sol) if sol.status == SolveStatus::PrimalInfeasible => NodeEval::Infeasible,
            Ok(first) => {
                let strict = SolveSettings {
                    max_iterations: settings.solver.max_iterations * 2,
                    static_reg: 1e-8,
                    ..settings.solver.clone()
                };
                match solve_named(&node_p, &strict) {
                    Ok(sol)
                        if sol.status == SolveStatus::Optimal
                            || sol.status == SolveStatus::PrimalInfeasible =>
                    {
                        classify(sol, &node_p)
                    }
                    _ => classify(first, &node_p),
                }
            }
            Err(_) => NodeEval::Infeasible,
        }
    };

    // gap handling for the maximization incumbent
    let closed = |inc: f64, bound: f64, settings: &BnbSettings| -> bool {
        bound - inc <= settings.abs_gap || (bound - inc) <= settings.rel_gap * inc.abs().max(1.0)
    };

    let root = eval(&[]);
    nodes += 1;
    let mut heap = BinaryHeap::new();
    match root {
        NodeEval::Infeasible => {
            return Ok(BnbResult {
                status: BnbStatus::Infeasible,
                incumbent: None,
                assignment: vec![],
                objective: f64::NEG_INFINITY,
                bound: f64::NEG_INFINITY,
                gap: 0.0,
                nodes,
                log,
            });
        }
        NodeEval::Solved(sol) => {
            heap.push(HeapNode {
                bound: sol.objective,
                seq,
                fixes: vec![],
                depth: 0,
                relax: Some(sol),
            });
            seq += 1;
        }
        NodeEval::FeasiblePoint(sol) => {
            heap.push(HeapNode {
                bound: f64::INFINITY,
                seq,
                fixes: vec![],
                depth: 0,
                relax: Some(sol),
            });
            seq += 1;
        }
        NodeEval::Unresolved => {
            heap.push(HeapNode {
                bound: f64::INFINITY,
                seq,
                fixes: vec![],
                depth: 0,
                relax: None,
            });
            seq += 1;
        }
    }

    let mut status = BnbStatus::Optimal;
    while let Some(node) = heap.pop() {
        let bound_now = node.bound.max(inc_obj);
        if incumbent.is_some() && closed(inc_obj, node.bound, settings) {
            // best-first: remaining nodes are all below the gap
            break;
        }
        if nodes >= settings.node_limit {
            status = BnbStatus::NodeLimit;
            break;
        }
        log.push(NodeRecord {
            id: log.len(),
            depth: node.depth,
            bound: bound_now,
            incumbent: inc_obj,
        });

        // branching variable: most fractional from the relaxation when
        // available, else the lowest-index unfixed binary
        let branch_choice = match &node.relax {
            Some(r) => fractional(&binaries, r, settings.int_tol),
            None => {
                let fixed: std::collections::HashSet<usize> =
                    node.fixes.iter().map(|&(k, _)| k).collect();
                (0..nb).find(|k| !fixed.contains(k)).map(|k| (k, 0.5))
            }
        };
        let Some((branch_k, _)) = branch_choice else {
            // binary-feasible relaxation: candidate incumbent
            if let Some(relax) = node.relax {
                if relax.objective > inc_obj {
                    inc_obj = relax.objective;
                    incumbent = Some(*relax);
                }
            }
            continue;
        };

        // rounding heuristic: fix every binary to its rounded value
        let rounding: Option<Vec<(usize, bool)>> = match (&node.relax, nb > 0) {
            (Some(relax), true) => {
                let rounded: Vec<u8> = binaries
                    .iter()
                    .map(|&v| u8::from(relax.value(v) >= 0.5))
                    .collect();
                if tried_roundings.insert(rounded.clone()) {
                    let fixes: Vec<(usize, bool)> = rounded
                        .iter()
                        .enumerate()
                        .map(|(k, &r)| (k, r == 1))
                        .collect();
                    let partial: Vec<Option<bool>> = fixes.iter().map(|&(_, b)| Some(b)).collect();
                    (!bin_rows.infeasible(&partial)).then_some(fixes)
                } else {
                    None
                }
            }
            _ => None,
        };
        // children: zero branch first
        let mut child_fixes: Vec<Option<Vec<(usize, bool)>>> = Vec::new();
        for value in [false, true] {
            let mut fixes = node.fixes.clone();
            fixes.push((branch_k, value));
            let mut partial: Vec<Option<bool>> = vec![None; nb];
            for &(k, b) in &fixes {
                partial[k] = Some(b);
            }
            child_fixes.push((!bin_rows.infeasible(&partial)).then_some(fixes));
        }
        // evaluate the probe and both children, then merge in serial order so
        // the search trajectory is reproducible either way
        let mut tasks: Vec<&Vec<(usize, bool)>> = Vec::new();
        if let Some(f) = &rounding {
            tasks.push(f);
        }
        for f in child_fixes.iter().flatten() {
            tasks.push(f);
        }
        nodes += tasks.len();
        let results: Vec<NodeEval> = if settings.deterministic || tasks.len() <= 1 {
            tasks.iter().map(|f| eval(f)).collect()
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = tasks.iter().map(|f| scope.spawn(|| eval(f))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("node eval"))
                    .collect()
            })
        };
        let mut results = results.into_iter();
        if rounding.is_some() {
            match results.next() {
                Some(NodeEval::Solved(sol)) | Some(NodeEval::FeasiblePoint(sol)) => {
                    // fully fixed, so any verified value is usable
                    if sol.objective > inc_obj {
                        inc_obj = sol.objective;
                        incumbent = Some(*sol);
                    }
                }
                _ => {}
            }
        }
        for fixes in child_fixes.into_iter().flatten() {
            let Some(outcome) = results.next() else {
                continue;
            };
            match outcome {
                NodeEval::Infeasible => {}
                NodeEval::Unresolved => {
                    // keep the subtree open under the parent bound
                    heap.push(HeapNode {
                        bound: node.bound,
                        seq,
                        fixes,
                        depth: node.depth + 1,
                        relax: None,
                    });
                    seq += 1;
                }
                NodeEval::Solved(sol) => {
                    // child bound cannot exceed the parent's
                    let child_bound = sol.objective.min(node.bound);
                    if incumbent.is_none() || !closed(inc_obj, child_bound, settings) {
                        heap.push(HeapNode {
                            bound: child_bound,
                            seq,
                            fixes,
                            depth: node.depth + 1,
                            relax: Some(sol),
                        });
                        seq += 1;
                    } else if sol.objective > inc_obj
                        && fractional(&binaries, &sol, settings.int_tol).is_none()
                    {
                        inc_obj = sol.objective;
                        incumbent = Some(*sol);
                    }
                }
                NodeEval::FeasiblePoint(sol) => {
                    if fractional(&binaries, &sol, settings.int_tol).is_none()
                        && sol.objective > inc_obj
                    {
                        inc_obj = sol.objective;
                        incumbent = Some((*sol).clone());
                    }
                    heap.push(HeapNode {
                        bound: node.bound,
                        seq,
                        fixes,
                        depth: node.depth + 1,
                        relax: Some(sol),
                    });
                    seq += 1;
                }
            }
        }
    }

    let bound = heap
        .peek()
        .map(|n| n.bound)
        .unwrap_or(f64::NEG_INFINITY)
        .max(inc_obj);
    match incumbent {
        Some(sol) => {
            let assignment: Vec<f64> = binaries.iter().map(|&v| sol.value(v).round()).collect();
            let gap = ((bound - inc_obj) / inc_obj.abs().max(1.0)).max(0.0);
            Ok(BnbResult {
                status,
                objective: inc_obj,
                incumbent: Some(sol),
                assignment,
                bound,
                gap,
                nodes,
                log,
            })
        }
        None => Ok(BnbResult {
            status: if status == BnbStatus::NodeLimit {
                status
            } else {
                BnbStatus::Infeasible
            },
            incumbent: None,
            assignment: vec![],
            objective: f64::NEG_INFINITY,
            bound,
            gap: f64::INFINITY,
            nodes,
            log,
        }),
    }
}

/// Exact reference: solve the continuous problem for every assignment of the
/// binaries. Purely-binary rows are checked before solving.
pub fn enumerate_exhaustive(p: &ConicProgram, limit: usize) -> Result<BnbResult, BnbError> {
    let binaries = p.binaries();
    let nb = binaries.len();
    if nb > limit.min(20) {
        return Err(BnbError::TooLarge {
            max: limit.min(20),
            got: nb,
        });
    }
    let bin_rows = BinaryRows::extract(p, &binaries);
    let mut best: Option<NamedSolution> = None;
    let mut best_obj = f64::NEG_INFINITY;
    let mut assignment = vec![];
    let mut nodes = 0usize;
    for mask in 0u64..(1u64 << nb) {
        let fixes: Vec<(usize, bool)> = (0..nb).map(|k| (k, mask >> k & 1 == 1)).collect();
        let partial: Vec<Option<bool>> = fixes.iter().map(|&(_, b)| Some(b)).collect();
        if bin_rows.infeasible(&partial) {
            continue;
        }
        nodes += 1;
        let node_p = apply_fixes(p, &binaries, &fixes);
        let settings = SolveSettings::default();
        let sol = match solve_named(&node_p, &settings) {
            Ok(sol) if sol.status == SolveStatus::Optimal => Some(sol),
            Ok(sol) if sol.status == SolveStatus::PrimalInfeasible => None,
            Ok(_) => {
                let strict = SolveSettings {
                    max_iterations: 400,
                    static_reg: 1e-8,
                    ..SolveSettings::default()
                };
                match solve_named(&node_p, &strict) {
                    Ok(sol) if sol.status == SolveStatus::Optimal => Some(sol),
                    Ok(sol)
                        if sol.status != SolveStatus::PrimalInfeasible
                            && node_p.is_feasible(&sol.vars, 1e-7) =>
                    {
                        Some(sol)
                    }
                    _ => None,
                }
            }
            Err(_) => None,
        };
        if let Some(sol) = sol {
            if sol.objective > best_obj {
                best_obj = sol.objective;
                assignment = fixes.iter().map(|&(_, b)| f64::from(u8::from(b))).collect();
                best = Some(sol);
            }
        }
    }
    Ok(BnbResult {
        status: if best.is_some() {
            BnbStatus::Optimal
        } else {
            BnbStatus::Infeasible
        },
        objective: best_obj,
        bound: best_obj,
        incumbent: best,
        assignment,
        gap: 0.0,
        nodes,
        log: vec![],
    })
}
