//! Solver-agnostic conic programs and their standard-form assembly.
//!
//! A [`ConicProgram`] is what the model builders produce: named variables with
//! bounds (and optional binary markers), linear equalities/inequalities,
//! second-order cone and rotated-cone memberships over affine expressions, and
//! a linear objective to maximize.
//!
//! [`StandardForm`] is what the interior-point solver consumes:
//! minimize c'x subject to Ax = b, x in K, where K is a product of free,
//! nonnegative, and second-order cones. Affine cone entries are lifted through
//! equality-linked slack variables; rotated cones are mapped to plain cones via
//! (v, w, u) -> (v + w, v - w, sqrt(2) u).

use std::collections::BTreeMap;

use crate::sparse::Csc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub(crate) usize);

impl VarId {
    pub fn index(&self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        LinExpr {
            terms: Vec::new(),
            constant: 0.0,
        }
    }

    pub fn constant(c: f64) -> Self {
        LinExpr {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(v: VarId) -> Self {
        LinExpr {
            terms: vec![(v, 1.0)],
            constant: 0.0,
        }
    }

    pub fn term(mut self, v: VarId, coeff: f64) -> Self {
        self.terms.push((v, coeff));
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn add_term(&mut self, v: VarId, coeff: f64) {
        self.terms.push((v, coeff));
    }

    pub fn scaled(&self, s: f64) -> Self {
        LinExpr {
            terms: self.terms.iter().map(|&(v, c)| (v, c * s)).collect(),
            constant: self.constant * s,
        }
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * point[v.0]).sum::<f64>()
    }

    fn max_var(&self) -> Option<usize> {
        self.terms.iter().map(|(v, _)| v.0).max()
    }
}

impl Default for LinExpr {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConicError {
    #[error("variable name `{0}` already declared")]
    DuplicateName(String),
    #[error("expression references an unknown variable (index {0})")]
    UnknownVariable(usize),
    #[error("program has no variables")]
    EmptyProgram,
    #[error("variable `{0}` has empty bound interval")]
    InvalidBounds(String),
    #[error("binary marker requires bounds within [0, 1] on `{0}`")]
    BadBinaryBounds(String),
}

#[derive(Clone, Debug)]
struct VarDef {
    name: String,
    lo: f64,
    hi: f64,
    binary: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EqId(pub usize);
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IneqId(pub usize);
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SocId(pub usize);
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RsocId(pub usize);

#[derive(Clone, Debug)]
pub struct SocRow {
    /// Radius expression: `||u|| <= t`.
    pub t: LinExpr,
    pub u: Vec<LinExpr>,
}

#[derive(Clone, Debug)]
pub struct RsocRow {
    /// `2 v w >= sum u_i^2`, `v, w >= 0`.
    pub v: LinExpr,
    pub w: LinExpr,
    pub u: Vec<LinExpr>,
}

/// Builder-style conic program over named variables; objective sense is
/// always maximize.
#[derive(Clone, Debug, Default)]
pub struct ConicProgram {
    vars: Vec<VarDef>,
    names: BTreeMap<String, VarId>,
    /// expr == 0
    pub(crate) eqs: Vec<LinExpr>,
    /// expr >= 0
    pub(crate) ineqs: Vec<LinExpr>,
    pub(crate) socs: Vec<SocRow>,
    pub(crate) rsocs: Vec<RsocRow>,
    objective: LinExpr,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_variable(&mut self, name: &str, lo: f64, hi: f64) -> Result<VarId, ConicError> {
        if self.names.contains_key(name) {
            return Err(ConicError::DuplicateName(name.to_string()));
        }
        if lo > hi {
            return Err(ConicError::InvalidBounds(name.to_string()));
        }
        let id = VarId(self.vars.len());
        self.vars.push(VarDef {
            name: name.to_string(),
            lo,
            hi,
            binary: false,
        });
        self.names.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn add_nonneg(&mut self, name: &str) -> Result<VarId, ConicError> {
        self.add_variable(name, 0.0, f64::INFINITY)
    }

    pub fn add_free(&mut self, name: &str) -> Result<VarId, ConicError> {
        self.add_variable(name, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn mark_binary(&mut self, v: VarId) -> Result<(), ConicError> {
        let def = &mut self.vars[v.0];
        if def.lo < 0.0 || def.hi > 1.0 {
            return Err(ConicError::BadBinaryBounds(def.name.clone()));
        }
        def.binary = true;
        Ok(())
    }

    pub fn set_bounds(&mut self, v: VarId, lo: f64, hi: f64) -> Result<(), ConicError> {
        if lo > hi {
            return Err(ConicError::InvalidBounds(self.vars[v.0].name.clone()));
        }
        self.vars[v.0].lo = lo;
        self.vars[v.0].hi = hi;
        Ok(())
    }

    pub fn bounds(&self, v: VarId) -> (f64, f64) {
        (self.vars[v.0].lo, self.vars[v.0].hi)
    }

    pub fn var(&self, name: &str) -> Option<VarId> {
        self.names.get(name).copied()
    }

    pub fn var_name(&self, v: VarId) -> &str {
        &self.vars[v.0].name
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn nth_var(&self, j: usize) -> Option<VarId> {
        (j < self.vars.len()).then_some(VarId(j))
    }

    pub fn eq_exprs(&self) -> &[LinExpr] {
        &self.eqs
    }

    pub fn ineq_exprs(&self) -> &[LinExpr] {
        &self.ineqs
    }

    pub fn soc_rows(&self) -> &[SocRow] {
        &self.socs
    }

    pub fn rsoc_rows(&self) -> &[RsocRow] {
        &self.rsocs
    }

    pub fn binaries(&self) -> Vec<VarId> {
        (0..self.vars.len())
            .filter(|&i| self.vars[i].binary)
            .map(VarId)
            .collect()
    }

    fn check_expr(&self, e: &LinExpr) -> Result<(), ConicError> {
        if let Some(mx) = e.max_var() {
            if mx >= self.vars.len() {
                return Err(ConicError::UnknownVariable(mx));
            }
        }
        Ok(())
    }

    /// expr == 0
    pub fn add_eq(&mut self, expr: LinExpr) -> Result<EqId, ConicError> {
        self.check_expr(&expr)?;
        self.eqs.push(expr);
        Ok(EqId(self.eqs.len() - 1))
    }

    /// expr >= 0
    pub fn add_ineq(&mut self, expr: LinExpr) -> Result<IneqId, ConicError> {
        self.check_expr(&expr)?;
        self.ineqs.push(expr);
        Ok(IneqId(self.ineqs.len() - 1))
    }

    /// ||u|| <= t
    pub fn add_soc(&mut self, t: LinExpr, u: Vec<LinExpr>) -> Result<SocId, ConicError> {
        self.check_expr(&t)?;
        for e in &u {
            self.check_expr(e)?;
        }
        self.socs.push(SocRow { t, u });
        Ok(SocId(self.socs.len() - 1))
    }

    /// 2 v w >= sum u_i^2, v, w >= 0
    pub fn add_rotated_soc(
        &mut self,
        v: LinExpr,
        w: LinExpr,
        u: Vec<LinExpr>,
    ) -> Result<RsocId, ConicError> {
        self.check_expr(&v)?;
        self.check_expr(&w)?;
        for e in &u {
            self.check_expr(e)?;
        }
        self.rsocs.push(RsocRow { v, w, u });
        Ok(RsocId(self.rsocs.len() - 1))
    }

    pub fn set_objective(&mut self, expr: LinExpr) -> Result<(), ConicError> {
        self.check_expr(&expr)?;
        self.objective = expr;
        Ok(())
    }

    pub fn objective(&self) -> &LinExpr {
        &self.objective
    }

    pub fn n_eqs(&self) -> usize {
        self.eqs.len()
    }

    pub fn n_ineqs(&self) -> usize {
        self.ineqs.len()
    }

    pub fn n_socs(&self) -> usize {
        self.socs.len()
    }

    pub fn n_rsocs(&self) -> usize {
        self.rsocs.len()
    }

    /// Feasibility of a named point within `tol` (used by tests and the
    /// disjunction audits; binary markers are ignored).
    pub fn is_feasible(&self, point: &[f64], tol: f64) -> bool {
        self.constraint_violation(point) <= tol
    }

    /// Largest constraint violation at a named point.
    pub fn constraint_violation(&self, point: &[f64]) -> f64 {
        let mut v: f64 = 0.0;
        for (i, def) in self.vars.iter().enumerate() {
            if def.lo.is_finite() {
                v = v.max(def.lo - point[i]);
            }
            if def.hi.is_finite() {
                v = v.max(point[i] - def.hi);
            }
        }
        for e in &self.eqs {
            v = v.max(e.eval(point).abs());
        }
        for e in &self.ineqs {
            v = v.max(-e.eval(point));
        }
        for s in &self.socs {
            let t = s.t.eval(point);
            let un =
                s.u.iter()
                    .map(|e| e.eval(point).powi(2))
                    .sum::<f64>()
                    .sqrt();
            v = v.max(un - t);
        }
        for r in &self.rsocs {
            let a = r.v.eval(point);
            let b = r.w.eval(point);
            let un2 = r.u.iter().map(|e| e.eval(point).powi(2)).sum::<f64>();
            v = v.max(-a).max(-b).max(un2 - 2.0 * a * b);
        }
        v
    }

    pub fn to_standard_form(&self) -> Result<(StandardForm, NamedMap), ConicError> {
        lift(self)
    }
}

/// Cone layout of a standard-form program: columns are ordered
/// [free | nonneg | soc blocks...].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConeLayout {
    pub n_free: usize,
    pub n_nonneg: usize,
    pub socs: Vec<usize>,
}

impl ConeLayout {
    pub fn dim(&self) -> usize {
        self.n_free + self.n_nonneg + self.socs.iter().sum::<usize>()
    }

    /// Number of cone blocks contributing to the barrier (nonneg entries each
    /// count one, plus one per second-order cone).
    pub fn barrier_degree(&self) -> usize {
        self.n_nonneg + self.socs.len()
    }

    pub fn cone_start(&self) -> usize {
        self.n_free
    }

    /// Membership check x in K within tol (componentwise for nonneg,
    /// `t - ||u|| >= -tol` for each cone).
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        let mut at = self.n_free;
        for _ in 0..self.n_nonneg {
            if x[at] < -tol {
                return false;
            }
            at += 1;
        }
        for &q in &self.socs {
            let t = x[at];
            let un = x[at + 1..at + q].iter().map(|v| v * v).sum::<f64>().sqrt();
            if t - un < -tol {
                return false;
            }
            at += q;
        }
        true
    }
}

/// minimize c'x subject to Ax = b, x in K.
#[derive(Clone, Debug)]
pub struct StandardForm {
    pub c: Vec<f64>,
    pub a: Csc,
    pub b: Vec<f64>,
    pub layout: ConeLayout,
}

impl StandardForm {
    pub fn n_cols(&self) -> usize {
        self.a.ncols()
    }

    pub fn n_rows(&self) -> usize {
        self.a.nrows()
    }

    /// Plain-text (row, col, value) listing of A plus the b and c vectors,
    /// for external cross-checks.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "standard form: {} rows, {} cols, {} nnz\n",
            self.n_rows(),
            self.n_cols(),
            self.a.nnz()
        ));
        out.push_str(&format!(
            "cones: free={} nonneg={} soc={:?}\n",
            self.layout.n_free, self.layout.n_nonneg, self.layout.socs
        ));
        out.push_str("A (row col value):\n");
        for (r, c, v) in self.a.triplets() {
            out.push_str(&format!("{r} {c} {v:.17e}\n"));
        }
        out.push_str("b (row value):\n");
        for (r, v) in self.b.iter().enumerate() {
            out.push_str(&format!("{r} {v:.17e}\n"));
        }
        out.push_str("c (col value):\n");
        for (c, v) in self.c.iter().enumerate() {
            out.push_str(&format!("{c} {v:.17e}\n"));
        }
        out
    }
}

#[derive(Clone, Copy, Debug)]
pub enum VarLoc {
    /// Variable was pinned by equal bounds and substituted out.
    Fixed(f64),
    /// v = shift + sign * x[col]
    Col { col: usize, shift: f64, sign: f64 },
}

#[derive(Clone, Debug)]
pub struct ConeLoc {
    /// First column of the slack block in standard form.
    pub first_col: usize,
    /// Block dimension.
    pub dim: usize,
    /// Standard-form rows defining the block slacks.
    pub def_rows: std::ops::Range<usize>,
}

/// Bookkeeping to map standard-form primal/dual vectors back to named space.
#[derive(Clone, Debug)]
pub struct NamedMap {
    pub var_loc: Vec<VarLoc>,
    /// Box-constrained variables: (slack column, row index).
    pub box_rows: Vec<Option<(usize, usize)>>,
    pub eq_rows: Vec<usize>,
    pub ineq_rows: Vec<usize>,
    pub ineq_slack_cols: Vec<usize>,
    pub soc_locs: Vec<ConeLoc>,
    pub rsoc_locs: Vec<ConeLoc>,
    pub obj_const: f64,
}

impl NamedMap {
    /// Named variable values from a standard-form point.
    pub fn primal(&self, x: &[f64]) -> Vec<f64> {
        self.var_loc
            .iter()
            .map(|loc| match *loc {
                VarLoc::Fixed(v) => v,
                VarLoc::Col { col, shift, sign } => shift + sign * x[col],
            })
            .collect()
    }

    /// Standard-form point from named variable values (for feasibility
    /// cross-checks). Requires the named point to respect fixed variables.
    pub fn lift_point(&self, program: &ConicProgram, named: &[f64], std_dim: usize) -> Vec<f64> {
        let mut x = vec![0.0; std_dim];
        for (j, loc) in self.var_loc.iter().enumerate() {
            if let VarLoc::Col { col, shift, sign } = *loc {
                x[col] = (named[j] - shift) / sign;
            }
        }
        for (j, br) in self.box_rows.iter().enumerate() {
            if let Some((slack_col, _)) = br {
                let (_, hi) = program.bounds(VarId(j));
                x[*slack_col] = hi - named[j];
            }
        }
        for (i, expr) in program.ineqs.iter().enumerate() {
            x[self.ineq_slack_cols[i]] = expr.eval(named);
        }
        for (i, soc) in program.socs.iter().enumerate() {
            let loc = &self.soc_locs[i];
            x[loc.first_col] = soc.t.eval(named);
            for (k, u) in soc.u.iter().enumerate() {
                x[loc.first_col + 1 + k] = u.eval(named);
            }
        }
        for (i, r) in program.rsocs.iter().enumerate() {
            let loc = &self.rsoc_locs[i];
            let v = r.v.eval(named);
            let w = r.w.eval(named);
            x[loc.first_col] = v + w;
            x[loc.first_col + 1] = v - w;
            for (k, u) in r.u.iter().enumerate() {
                x[loc.first_col + 2 + k] = std::f64::consts::SQRT_2 * u.eval(named);
            }
        }
        x
    }
}

fn lift(p: &ConicProgram) -> Result<(StandardForm, NamedMap), ConicError> {
    if p.vars.is_empty() {
        return Err(ConicError::EmptyProgram);
    }
    // Pass 1: classify variables and allocate free columns.
    #[derive(Clone, Copy)]
    enum Kind {
        Fixed(f64),
        Free,
        Lower(f64),
        Upper(f64),
        Boxed,
    }
    let kinds: Vec<Kind> = p
        .vars
        .iter()
        .map(|d| {
            if d.lo == d.hi {
                Kind::Fixed(d.lo)
            } else if d.lo.is_finite() && d.hi.is_finite() {
                Kind::Boxed
            } else if d.lo.is_finite() {
                Kind::Lower(d.lo)
            } else if d.hi.is_finite() {
                Kind::Upper(d.hi)
            } else {
                Kind::Free
            }
        })
        .collect();

    let n_free = kinds.iter().filter(|k| matches!(k, Kind::Free)).count();
    let mut var_loc = vec![VarLoc::Fixed(0.0); p.vars.len()];
    let mut box_vars: Vec<usize> = Vec::new();
    let mut next_free = 0usize;
    let mut next_nonneg = n_free;
    for (j, k) in kinds.iter().enumerate() {
        match *k {
            Kind::Fixed(v) => var_loc[j] = VarLoc::Fixed(v),
            Kind::Free => {
                var_loc[j] = VarLoc::Col {
                    col: next_free,
                    shift: 0.0,
                    sign: 1.0,
                };
                next_free += 1;
            }
            Kind::Lower(lo) => {
                var_loc[j] = VarLoc::Col {
                    col: next_nonneg,
                    shift: lo,
                    sign: 1.0,
                };
                next_nonneg += 1;
            }
            Kind::Upper(hi) => {
                var_loc[j] = VarLoc::Col {
                    col: next_nonneg,
                    shift: hi,
                    sign: -1.0,
                };
                next_nonneg += 1;
            }
            Kind::Boxed => {
                var_loc[j] = VarLoc::Col {
                    col: next_nonneg,
                    shift: p.vars[j].lo,
                    sign: 1.0,
                };
                next_nonneg += 1;
                box_vars.push(j);
            }
        }
    }
    // box slacks, then inequality slacks, complete the nonneg section
    let mut box_rows: Vec<Option<(usize, usize)>> = vec![None; p.vars.len()];
    let mut box_slack_cols = Vec::with_capacity(box_vars.len());
    for &j in &box_vars {
        box_slack_cols.push((j, next_nonneg));
        next_nonneg += 1;
    }
    let mut ineq_slack_cols = Vec::with_capacity(p.ineqs.len());
    for _ in &p.ineqs {
        ineq_slack_cols.push(next_nonneg);
        next_nonneg += 1;
    }
    let n_nonneg = next_nonneg - n_free;
    // cone blocks
    let mut socs_dims = Vec::new();
    let mut soc_first = Vec::new();
    let mut at = next_nonneg;
    for s in &p.socs {
        soc_first.push(at);
        socs_dims.push(1 + s.u.len());
        at += 1 + s.u.len();
    }
    let mut rsoc_first = Vec::new();
    for r in &p.rsocs {
        rsoc_first.push(at);
        socs_dims.push(2 + r.u.len());
        at += 2 + r.u.len();
    }
    let n_cols = at;

    // Pass 2: rows.
    let mut trips: Vec<(usize, usize, f64)> = Vec::new();
    let mut b: Vec<f64> = Vec::new();
    let mut row = 0usize;

    // expr(v) contribution: returns constant part accumulated from shifts and
    // fixed variables; pushes triplets for live columns.
    let emit_expr =
        |expr: &LinExpr, row: usize, scale: f64, trips: &mut Vec<(usize, usize, f64)>| -> f64 {
            let mut constant = expr.constant;
            for &(v, coeff) in &expr.terms {
                match var_loc[v.0] {
                    VarLoc::Fixed(val) => constant += coeff * val,
                    VarLoc::Col { col, shift, sign } => {
                        constant += coeff * shift;
                        trips.push((row, col, scale * coeff * sign));
                    }
                }
            }
            scale * constant
        };

    let mut eq_rows = Vec::with_capacity(p.eqs.len());
    for expr in &p.eqs {
        let k = emit_expr(expr, row, 1.0, &mut trips);
        b.push(-k);
        eq_rows.push(row);
        row += 1;
    }
    let mut ineq_rows = Vec::with_capacity(p.ineqs.len());
    for (i, expr) in p.ineqs.iter().enumerate() {
        let k = emit_expr(expr, row, 1.0, &mut trips);
        trips.push((row, ineq_slack_cols[i], -1.0));
        b.push(-k);
        ineq_rows.push(row);
        row += 1;
    }
    for &(j, slack_col) in &box_slack_cols {
        let (lo, hi) = (p.vars[j].lo, p.vars[j].hi);
        let VarLoc::Col { col, .. } = var_loc[j] else {
            unreachable!()
        };
        trips.push((row, col, 1.0));
        trips.push((row, slack_col, 1.0));
        b.push(hi - lo);
        box_rows[j] = Some((slack_col, row));
        row += 1;
    }
    let mut soc_locs = Vec::with_capacity(p.socs.len());
    for (i, s) in p.socs.iter().enumerate() {
        let first = soc_first[i];
        let start_row = row;
        // w_0 = t(v), w_k = u_k(v): rows w - expr = 0
        let k = emit_expr(&s.t, row, -1.0, &mut trips);
        trips.push((row, first, 1.0));
        b.push(-k);
        row += 1;
        for (kk, u) in s.u.iter().enumerate() {
            let c = emit_expr(u, row, -1.0, &mut trips);
            trips.push((row, first + 1 + kk, 1.0));
            b.push(-c);
            row += 1;
        }
        soc_locs.push(ConeLoc {
            first_col: first,
            dim: 1 + s.u.len(),
            def_rows: start_row..row,
        });
    }
    let mut rsoc_locs = Vec::with_capacity(p.rsocs.len());
    for (i, r) in p.rsocs.iter().enumerate() {
        let first = rsoc_first[i];
        let start_row = row;
        // w0 = v + w
        let mut k = emit_expr(&r.v, row, -1.0, &mut trips);
        k += emit_expr(&r.w, row, -1.0, &mut trips);
        trips.push((row, first, 1.0));
        b.push(-k);
        row += 1;
        // w1 = v - w
        let mut k = emit_expr(&r.v, row, -1.0, &mut trips);
        k += emit_expr(&r.w, row, 1.0, &mut trips);
        trips.push((row, first + 1, 1.0));
        b.push(-k);
        row += 1;
        for (kk, u) in r.u.iter().enumerate() {
            let c = emit_expr(u, row, -std::f64::consts::SQRT_2, &mut trips);
            trips.push((row, first + 2 + kk, 1.0));
            b.push(-c);
            row += 1;
        }
        rsoc_locs.push(ConeLoc {
            first_col: first,
            dim: 2 + r.u.len(),
            def_rows: start_row..row,
        });
    }

    // Objective: maximize obj -> minimize -obj.
    let mut c = vec![0.0; n_cols];
    let mut obj_const = p.objective.constant;
    for &(v, coeff) in &p.objective.terms {
        match var_loc[v.0] {
            VarLoc::Fixed(val) => obj_const += coeff * val,
            VarLoc::Col { col, shift, sign } => {
                obj_const += coeff * shift;
                c[col] -= coeff * sign;
            }
        }
    }

    let a = Csc::from_triplets(row, n_cols, &trips);
    let layout = ConeLayout {
        n_free,
        n_nonneg,
        socs: socs_dims,
    };
    let sf = StandardForm { c, a, b, layout };
    let map = NamedMap {
        var_loc,
        box_rows,
        eq_rows,
        ineq_rows,
        ineq_slack_cols,
        soc_locs,
        rsoc_locs,
        obj_const,
    };
    Ok((sf, map))
}
