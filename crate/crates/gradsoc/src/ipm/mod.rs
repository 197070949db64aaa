//! Embedded primal-dual interior-point solver for standard-form SOCPs.
//!
//! Algorithm: homogeneous self-dual embedding with Nesterov-Todd scaling and a
//! Mehrotra predictor-corrector, so infeasible and unbounded instances are
//! detected through Farkas-type certificates rather than divergence. The KKT
//! systems are solved by an unpivoted sparse LDL' factorization under reverse
//! Cuthill-McKee ordering, with static regularization and iterative
//! refinement. Problem data is Ruiz-equilibrated (cone-block uniform) up
//! front; every convergence test runs against the original data.

pub mod cones;
pub mod ldl;

use crate::conic::{ConeLayout, ConicProgram, NamedMap, StandardForm, VarLoc};
use crate::linalg::{dot, norm_inf};
use crate::sparse::Csc;
use cones::{ConeOps, Scaling};
use ldl::{choose_order, SymbolicLdl};

#[derive(Clone, Debug)]
pub struct SolveSettings {
    pub max_iterations: usize,
    /// Relative primal/dual feasibility tolerance.
    pub eps_feas: f64,
    /// Relative duality-gap tolerance.
    pub eps_gap: f64,
    /// Fraction-to-boundary step scaling.
    pub frac_to_boundary: f64,
    /// Static KKT regularization.
    pub static_reg: f64,
    pub equilibrate: bool,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings {
            max_iterations: 200,
            eps_feas: 1e-8,
            eps_gap: 1e-8,
            frac_to_boundary: 0.99,
            static_reg: 1e-10,
            equilibrate: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    PrimalInfeasible,
    /// Dual infeasibility: for a feasible maximization this means the
    /// objective is unbounded above.
    DualInfeasible,
    IterationLimit,
    NumericalError,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ResidualReport {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub tau: f64,
    pub kappa: f64,
}

/// Farkas-type ray backing an infeasibility status, in original units.
#[derive(Clone, Debug)]
pub enum InfeasCert {
    /// y with b'y = 1, A'y + z ~ 0, z in K*.
    Primal {
        y: Vec<f64>,
        z: Vec<f64>,
        residual: f64,
    },
    /// Improving ray x in K with c'x = -1, A x ~ 0.
    Dual { x: Vec<f64>, residual: f64 },
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Primal solution (x/tau), original units.
    pub x: Vec<f64>,
    /// Equality multipliers (y/tau).
    pub y: Vec<f64>,
    /// Cone duals (z/tau).
    pub z: Vec<f64>,
    /// Standard-form (minimization) objective c'x.
    pub objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
    pub residuals: ResidualReport,
    pub certificate: Option<InfeasCert>,
}

#[derive(Clone, Copy)]
enum Slot {
    XDiag,
    NonnegDiag(usize),
    /// (block, local i, local j)
    Soc(usize, usize, usize),
    AEntry(f64),
    YDiag,
}

/// Upper triangle pattern of [[H + dI, A'], [A, -dI]] with a slot table
/// describing how to fill values each iteration.
fn build_kkt(a_t: &Csc, layout: &ConeLayout) -> (Csc, Vec<Slot>) {
    let n = a_t.nrows();
    let m = a_t.ncols();
    let mut colptr = vec![0usize; n + m + 1];
    let mut rowind = Vec::new();
    let mut slots: Vec<Slot> = Vec::new();
    let cone0 = layout.n_free;
    let soc0 = cone0 + layout.n_nonneg;
    let mut soc_of_col: Vec<Option<(usize, usize)>> = vec![None; n]; // (block, start)
    let mut at = soc0;
    for (bi, &q) in layout.socs.iter().enumerate() {
        for k in 0..q {
            soc_of_col[at + k] = Some((bi, at));
        }
        at += q;
    }
    for j in 0..n {
        match soc_of_col[j] {
            None => {
                rowind.push(j);
                slots.push(if j < cone0 {
                    Slot::XDiag
                } else {
                    Slot::NonnegDiag(j - cone0)
                });
            }
            Some((bi, start)) => {
                for i in start..=j {
                    rowind.push(i);
                    slots.push(Slot::Soc(bi, i - start, j - start));
                }
            }
        }
        colptr[j + 1] = rowind.len();
    }
    for r in 0..m {
        for (i, v) in a_t.col(r) {
            rowind.push(i);
            slots.push(Slot::AEntry(v));
        }
        rowind.push(n + r);
        slots.push(Slot::YDiag);
        colptr[n + r + 1] = rowind.len();
    }
    let nnz = rowind.len();
    (
        Csc::from_parts(n + m, n + m, colptr, rowind, vec![0.0; nnz]),
        slots,
    )
}

struct Work<'a> {
    orig: &'a StandardForm,
    a: Csc,
    at: Csc,
    c: Vec<f64>,
    b: Vec<f64>,
    d_row: Vec<f64>,
    d_col: Vec<f64>,
    cs: f64,
    bs: f64,
}

impl<'a> Work<'a> {
    fn new(sf: &'a StandardForm, equilibrate: bool) -> Self {
        let n = sf.n_cols();
        let m = sf.n_rows();
        let mut a = sf.a.clone();
        let mut d_row = vec![1.0; m];
        let mut d_col = vec![1.0; n];
        if equilibrate && a.nnz() > 0 {
            let soc_start = sf.layout.n_free + sf.layout.n_nonneg;
            for _ in 0..8 {
                let mut rmax = vec![0.0f64; m];
                let mut cmax = vec![0.0f64; n];
                for cidx in 0..n {
                    for k in a.colptr[cidx]..a.colptr[cidx + 1] {
                        let v = a.values[k].abs();
                        let r = a.rowind[k];
                        rmax[r] = rmax[r].max(v);
                        cmax[cidx] = cmax[cidx].max(v);
                    }
                }
                let mut at0 = soc_start;
                for &q in &sf.layout.socs {
                    let g = cmax[at0..at0 + q].iter().cloned().fold(0.0f64, f64::max);
                    cmax[at0..at0 + q].iter_mut().for_each(|c| *c = g);
                    at0 += q;
                }
                let dr: Vec<f64> = rmax
                    .iter()
                    .map(|&v| if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 })
                    .collect();
                let dc: Vec<f64> = cmax
                    .iter()
                    .map(|&v| if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 })
                    .collect();
                for cidx in 0..n {
                    for k in a.colptr[cidx]..a.colptr[cidx + 1] {
                        a.values[k] *= dr[a.rowind[k]] * dc[cidx];
                    }
                }
                d_row.iter_mut().zip(&dr).for_each(|(d, s)| *d *= s);
                d_col.iter_mut().zip(&dc).for_each(|(d, s)| *d *= s);
            }
        }
        let mut b: Vec<f64> = sf.b.iter().zip(&d_row).map(|(v, d)| v * d).collect();
        let bs = 1.0 / norm_inf(&b).max(1.0);
        b.iter_mut().for_each(|v| *v *= bs);
        let mut c: Vec<f64> = sf.c.iter().zip(&d_col).map(|(v, d)| v * d).collect();
        let cs = 1.0 / norm_inf(&c).max(1.0);
        c.iter_mut().for_each(|v| *v *= cs);
        let at = a.transpose();
        Work {
            orig: sf,
            a,
            at,
            c,
            b,
            d_row,
            d_col,
            cs,
            bs,
        }
    }

    fn unscale_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.d_col)
            .map(|(v, d)| v * d / self.bs)
            .collect()
    }

    fn unscale_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(&self.d_row)
            .map(|(v, d)| v * d / self.cs)
            .collect()
    }

    fn unscale_z(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.d_col)
            .map(|(v, d)| v / d / self.cs)
            .collect()
    }
}

struct Direction {
    dx: Vec<f64>,
    dy: Vec<f64>,
    dz: Vec<f64>,
    dtau: f64,
    dkappa: f64,
}

enum Check {
    Done(Box<SolveResult>),
    Continue {
        score: f64,
        candidate: Box<SolveResult>,
        pinf: Option<(f64, Vec<f64>, Vec<f64>)>,
        dinf: Option<(f64, Vec<f64>)>,
    },
}

#[allow(clippy::too_many_arguments)]
fn check_terminate(
    w: &Work,
    settings: &SolveSettings,
    x: &[f64],
    y: &[f64],
    z: &[f64],
    tau: f64,
    kappa: f64,
    iterations: usize,
) -> Check {
    let sf = w.orig;
    let xu = w.unscale_x(x);
    let yu = w.unscale_y(y);
    let zu = w.unscale_z(z);
    let xc: Vec<f64> = xu.iter().map(|v| v / tau).collect();
    let yc: Vec<f64> = yu.iter().map(|v| v / tau).collect();
    let zc: Vec<f64> = zu.iter().map(|v| v / tau).collect();
    let mut rp = sf.a.matvec(&xc);
    rp.iter_mut().zip(&sf.b).for_each(|(r, bi)| *r -= bi);
    let mut rd = sf.a.matvec_t(&yc);
    for ((r, zi), ci) in rd.iter_mut().zip(&zc).zip(&sf.c) {
        *r += zi - ci;
    }
    let pobj = dot(&sf.c, &xc);
    let dobj = dot(&sf.b, &yc);
    let pres = norm_inf(&rp) / (1.0 + norm_inf(&sf.b));
    let dres = norm_inf(&rd) / (1.0 + norm_inf(&sf.c));
    let gap = (pobj - dobj).abs() / (1.0 + pobj.abs().max(dobj.abs()));
    let residuals = ResidualReport {
        primal: pres,
        dual: dres,
        gap,
        tau,
        kappa,
    };
    if pres <= settings.eps_feas && dres <= settings.eps_feas && gap <= settings.eps_gap {
        return Check::Done(Box::new(SolveResult {
            status: SolveStatus::Optimal,
            x: xc,
            y: yc,
            z: zc,
            objective: pobj,
            dual_objective: dobj,
            iterations,
            residuals,
            certificate: None,
        }));
    }
    let bty = dot(&sf.b, &yu);
    if bty > 0.0 {
        let cert_y: Vec<f64> = yu.iter().map(|v| v / bty).collect();
        let cert_z: Vec<f64> = zu.iter().map(|v| v / bty).collect();
        let mut r = sf.a.matvec_t(&cert_y);
        r.iter_mut().zip(&cert_z).for_each(|(ri, zi)| *ri += zi);
        let resid = norm_inf(&r) * (1.0 + norm_inf(&sf.b));
        if resid <= settings.eps_feas {
            return Check::Done(Box::new(SolveResult {
                status: SolveStatus::PrimalInfeasible,
                x: xc,
                y: cert_y.clone(),
                z: cert_z.clone(),
                objective: f64::NAN,
                dual_objective: f64::NAN,
                iterations,
                residuals,
                certificate: Some(InfeasCert::Primal {
                    y: cert_y,
                    z: cert_z,
                    residual: resid,
                }),
            }));
        }
    }
    let mut near_pinf = None;
    if bty > 0.0 {
        let cert_y: Vec<f64> = yu.iter().map(|v| v / bty).collect();
        let cert_z: Vec<f64> = zu.iter().map(|v| v / bty).collect();
        let mut r = sf.a.matvec_t(&cert_y);
        r.iter_mut().zip(&cert_z).for_each(|(ri, zi)| *ri += zi);
        let resid = norm_inf(&r) * (1.0 + norm_inf(&sf.b));
        if resid <= 1e-4 {
            near_pinf = Some((resid, cert_y, cert_z));
        }
    }
    let ctx = dot(&sf.c, &xu);
    if ctx < 0.0 {
        let cert_x: Vec<f64> = xu.iter().map(|v| v / (-ctx)).collect();
        let r = sf.a.matvec(&cert_x);
        let resid = norm_inf(&r) * (1.0 + norm_inf(&sf.c));
        if resid <= settings.eps_feas {
            return Check::Done(Box::new(SolveResult {
                status: SolveStatus::DualInfeasible,
                x: cert_x.clone(),
                y: yc,
                z: zc,
                objective: f64::NAN,
                dual_objective: f64::NAN,
                iterations,
                residuals,
                certificate: Some(InfeasCert::Dual {
                    x: cert_x,
                    residual: resid,
                }),
            }));
        }
    }
    let mut near_dinf = None;
    if ctx < 0.0 {
        let cert_x: Vec<f64> = xu.iter().map(|v| v / (-ctx)).collect();
        let r = sf.a.matvec(&cert_x);
        let resid = norm_inf(&r) * (1.0 + norm_inf(&sf.c));
        if resid <= 1e-4 {
            near_dinf = Some((resid, cert_x));
        }
    }
    let score = pres.max(dres).max(gap);
    Check::Continue {
        score,
        candidate: Box::new(SolveResult {
            status: SolveStatus::IterationLimit,
            x: xc,
            y: yc,
            z: zc,
            objective: pobj,
            dual_objective: dobj,
            iterations,
            residuals,
            certificate: None,
        }),
        pinf: near_pinf,
        dinf: near_dinf,
    }
}

/// Solves a standard-form conic program. Does not panic on well-formed input;
/// trouble is reported through the status.
pub fn solve(sf: &StandardForm, settings: &SolveSettings) -> SolveResult {
    solve_inner(sf, settings, true)
}

/// Phase-1 feasibility measure: minimize t over `A x + (b - A e) t = b`,
/// `x in K`, `t >= 0`, which always has the interior point (e, 1). The
/// optimal t is ~0 iff the original equalities admit a cone-feasible point.
fn phase1_infeasibility(sf: &StandardForm, settings: &SolveSettings) -> Option<f64> {
    let n = sf.n_cols();
    let m = sf.n_rows();
    let ops = ConeOps::new(&sf.layout);
    let e = ops.identity();
    let ae = sf.a.matvec(&e);
    // the artificial column slots into the nonnegative block, shifting the
    // cone blocks one column to the right
    let t_col = sf.layout.n_free + sf.layout.n_nonneg;
    let shift = |j: usize| if j < t_col { j } else { j + 1 };
    let mut trips: Vec<(usize, usize, f64)> =
        sf.a.triplets()
            .into_iter()
            .map(|(r, c, v)| (r, shift(c), v))
            .collect();
    for r in 0..m {
        let v = sf.b[r] - ae[r];
        if v != 0.0 {
            trips.push((r, t_col, v));
        }
    }
    let a = Csc::from_triplets(m, n + 1, &trips);
    let mut c = vec![0.0; n + 1];
    c[t_col] = 1.0;
    let layout = ConeLayout {
        n_free: sf.layout.n_free,
        n_nonneg: sf.layout.n_nonneg + 1,
        socs: sf.layout.socs.clone(),
    };
    let sf1 = StandardForm {
        c,
        a,
        b: sf.b.clone(),
        layout,
    };
    let s1 = SolveSettings {
        max_iterations: settings.max_iterations.max(100),
        ..settings.clone()
    };
    let res = solve_inner(&sf1, &s1, false);
    match res.status {
        SolveStatus::Optimal => Some(res.objective.max(0.0)),
        _ => None,
    }
}

fn solve_inner(sf: &StandardForm, settings: &SolveSettings, allow_phase1: bool) -> SolveResult {
    let n = sf.n_cols();
    let m = sf.n_rows();
    debug_assert_eq!(sf.layout.dim(), n);
    // structurally empty rows with nonzero rhs are trivially infeasible
    {
        let mut row_nnz = vec![0usize; m];
        for &r in &sf.a.rowind {
            row_nnz[r] += 1;
        }
        for r in 0..m {
            if row_nnz[r] == 0 && sf.b[r] != 0.0 {
                let mut y = vec![0.0; m];
                y[r] = 1.0 / sf.b[r];
                return SolveResult {
                    status: SolveStatus::PrimalInfeasible,
                    x: vec![0.0; n],
                    y: y.clone(),
                    z: vec![0.0; n],
                    objective: f64::NAN,
                    dual_objective: f64::NAN,
                    iterations: 0,
                    residuals: ResidualReport::default(),
                    certificate: Some(InfeasCert::Primal {
                        y,
                        z: vec![0.0; n],
                        residual: 0.0,
                    }),
                };
            }
        }
    }

    let w = Work::new(sf, settings.equilibrate);
    let ops = ConeOps::new(&sf.layout);
    let nu = ops.degree() as f64;
    let (mut kkt, slots) = build_kkt(&w.at, &sf.layout);
    let perm = choose_order(n + m, &kkt);
    let sym = SymbolicLdl::new(&kkt, perm);

    let mut x = ops.identity();
    let mut y = vec![0.0; m];
    let mut z = ops.identity();
    let mut tau = 1.0f64;
    let mut kappa = 1.0f64;

    let mut best: Option<(f64, Box<SolveResult>)> = None;
    let mut best_pinf: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let mut best_dinf: Option<(f64, Vec<f64>)> = None;
    let mut delta = settings.static_reg.max(1e-12);
    let mut stalls = 0usize;
    let mut clean_exit = false;

    let trace = std::env::var("GRADSOC_IPM_TRACE").is_ok();
    let mut t_check = 0.0f64;
    let mut t_factor = 0.0f64;
    let mut t_dirs = 0.0f64;
    let t_all = std::time::Instant::now();
    let mut iterations = 0usize;
    for iter in 0..=settings.max_iterations {
        iterations = iter;
        let t0 = std::time::Instant::now();
        let chk = check_terminate(&w, settings, &x, &y, &z, tau, kappa, iter);
        t_check += t0.elapsed().as_secs_f64();
        match chk {
            Check::Done(res) => {
                if trace {
                    eprintln!(
                        "ipm trace: {iter} iters, check {t_check:.3}s factor {t_factor:.3}s dirs {t_dirs:.3}s total {:.3}s",
                        t_all.elapsed().as_secs_f64()
                    );
                }
                return *res;
            }
            Check::Continue {
                score,
                candidate,
                pinf,
                dinf,
            } => {
                if best.as_ref().map_or(true, |(s, _)| score < *s) {
                    best = Some((score, candidate));
                }
                if let Some(c) = pinf {
                    if best_pinf.as_ref().map_or(true, |(r, _, _)| c.0 < *r) {
                        best_pinf = Some(c);
                    }
                }
                if let Some(c) = dinf {
                    if best_dinf.as_ref().map_or(true, |(r, _)| c.0 < *r) {
                        best_dinf = Some(c);
                    }
                }
            }
        }
        if iter == settings.max_iterations {
            clean_exit = true;
            break;
        }
        // the embedding degenerated; the best near-certificate decides below
        if tau < 1e-9 {
            break;
        }

        let mu = (ops.cone_dot(&x, &z) + tau * kappa) / (nu + 1.0);
        let scaling = match ops.scaling(&x, &z) {
            Some(s) => s,
            None => break,
        };
        let t0 = std::time::Instant::now();
        // assemble + factor, escalating regularization on breakdown
        let factor = loop {
            fill_kkt(&mut kkt, &slots, &scaling, delta);
            match sym.factor(&kkt.values) {
                Ok(f) => break Some(f),
                Err(_) => {
                    delta *= 100.0;
                    if delta > 1e-2 {
                        break None;
                    }
                }
            }
        };
        t_factor += t0.elapsed().as_secs_f64();
        let factor = match factor {
            Some(f) => f,
            None => break,
        };
        let t0 = std::time::Instant::now();
        let kkt_solve = |rhs_x: &[f64], rhs_y: &[f64]| -> (Vec<f64>, Vec<f64>) {
            let mut rhs = vec![0.0; n + m];
            rhs[..n].copy_from_slice(rhs_x);
            rhs[n..].copy_from_slice(rhs_y);
            let mut sol = factor.solve(&rhs);
            for _ in 0..2 {
                let mut res = rhs.clone();
                let (sx, sy) = sol.split_at(n);
                let mut hx = vec![0.0; n];
                ops.apply_h(&scaling, sx, &mut hx);
                let aty = w.at.matvec(sy);
                for i in 0..n {
                    res[i] -= hx[i] + aty[i];
                }
                let ax = w.a.matvec(sx);
                for r in 0..m {
                    res[n + r] -= ax[r];
                }
                if norm_inf(&res) <= 1e-13 * (1.0 + norm_inf(&rhs)) {
                    break;
                }
                let corr = factor.solve(&res);
                sol.iter_mut().zip(&corr).for_each(|(s, c)| *s += c);
            }
            (sol[..n].to_vec(), sol[n..].to_vec())
        };

        let mut res_p = w.a.matvec(&x);
        res_p
            .iter_mut()
            .zip(&w.b)
            .for_each(|(r, bi)| *r -= bi * tau);
        let mut res_d = w.at.matvec(&y);
        for ((r, zi), ci) in res_d.iter_mut().zip(&z).zip(&w.c) {
            *r = -*r - zi + ci * tau;
        }
        let res_g = dot(&w.b, &y) - dot(&w.c, &x) - kappa;

        let neg_c: Vec<f64> = w.c.iter().map(|v| -v).collect();
        let (g2x, g2s) = kkt_solve(&neg_c, &w.b);
        let den = kappa / tau - dot(&w.b, &g2s) - dot(&w.c, &g2x);
        if den.abs() < 1e-300 {
            break;
        }

        let direction = |ds: &[f64], dkap: f64, scale_lin: f64| -> Direction {
            let mut lam_ds = vec![0.0; n];
            ops.lambda_div(&scaling, ds, &mut lam_ds);
            let mut winv_lam_ds = vec![0.0; n];
            ops.apply_w_inv(&scaling, &lam_ds, &mut winv_lam_ds);
            let rhs_x: Vec<f64> = (0..n)
                .map(|i| -scale_lin * res_d[i] + winv_lam_ds[i])
                .collect();
            let rhs_y: Vec<f64> = (0..m).map(|r| -scale_lin * res_p[r]).collect();
            let (g1x, g1s) = kkt_solve(&rhs_x, &rhs_y);
            let num = -scale_lin * res_g + dkap / tau + dot(&w.b, &g1s) + dot(&w.c, &g1x);
            let dtau = num / den;
            let dx: Vec<f64> = (0..n).map(|i| g1x[i] + dtau * g2x[i]).collect();
            let dy: Vec<f64> = (0..m).map(|r| -(g1s[r] + dtau * g2s[r])).collect();
            let mut hdx = vec![0.0; n];
            ops.apply_h(&scaling, &dx, &mut hdx);
            let dz: Vec<f64> = (0..n).map(|i| winv_lam_ds[i] - hdx[i]).collect();
            let dkappa = (dkap - kappa * dtau) / tau;
            Direction {
                dx,
                dy,
                dz,
                dtau,
                dkappa,
            }
        };

        // predictor
        let mut lam_sq = vec![0.0; n];
        ops.jordan_prod(&scaling.lambda, &scaling.lambda, &mut lam_sq);
        let ds_aff: Vec<f64> = lam_sq.iter().map(|v| -v).collect();
        let aff = direction(&ds_aff, -tau * kappa, 1.0);
        let alpha_aff = step_length(&ops, &x, &z, tau, kappa, &aff, 1.0);
        let mu_aff = {
            let xa: Vec<f64> = x
                .iter()
                .zip(&aff.dx)
                .map(|(v, d)| v + alpha_aff * d)
                .collect();
            let za: Vec<f64> = z
                .iter()
                .zip(&aff.dz)
                .map(|(v, d)| v + alpha_aff * d)
                .collect();
            let ta = tau + alpha_aff * aff.dtau;
            let ka = kappa + alpha_aff * aff.dkappa;
            (ops.cone_dot(&xa, &za) + ta * ka) / (nu + 1.0)
        };
        let sigma = (mu_aff / mu).powi(3).clamp(1e-12, 0.999);

        // corrector
        let mut wdx = vec![0.0; n];
        ops.apply_w_inv(&scaling, &aff.dx, &mut wdx);
        let mut wdz = vec![0.0; n];
        ops.apply_w(&scaling, &aff.dz, &mut wdz);
        let mut cor = vec![0.0; n];
        ops.jordan_prod(&wdx, &wdz, &mut cor);
        let e = ops.identity();
        let ds_comb: Vec<f64> = (0..n)
            .map(|i| sigma * mu * e[i] - lam_sq[i] - cor[i])
            .collect();
        let dk_comb = sigma * mu - tau * kappa - aff.dtau * aff.dkappa;
        let comb = direction(&ds_comb, dk_comb, 1.0 - sigma);

        let mut alpha = step_length(&ops, &x, &z, tau, kappa, &comb, settings.frac_to_boundary);
        for _ in 0..20 {
            let xa: Vec<f64> = x.iter().zip(&comb.dx).map(|(v, d)| v + alpha * d).collect();
            let za: Vec<f64> = z.iter().zip(&comb.dz).map(|(v, d)| v + alpha * d).collect();
            if ops.is_interior(&xa)
                && ops.is_interior(&za)
                && tau + alpha * comb.dtau > 0.0
                && kappa + alpha * comb.dkappa > 0.0
            {
                break;
            }
            alpha *= 0.9;
        }
        if alpha < 1e-9 {
            stalls += 1;
            if stalls >= 3 {
                break;
            }
        } else {
            stalls = 0;
        }
        x.iter_mut()
            .zip(&comb.dx)
            .for_each(|(v, d)| *v += alpha * d);
        y.iter_mut()
            .zip(&comb.dy)
            .for_each(|(v, d)| *v += alpha * d);
        z.iter_mut()
            .zip(&comb.dz)
            .for_each(|(v, d)| *v += alpha * d);
        tau += alpha * comb.dtau;
        kappa += alpha * comb.dkappa;
        t_dirs += t0.elapsed().as_secs_f64();
    }
    if trace {
        eprintln!(
            "ipm trace: {iterations} iters, check {t_check:.3}s factor {t_factor:.3}s dirs {t_dirs:.3}s total {:.3}s",
            t_all.elapsed().as_secs_f64()
        );
    }

    // unresolved runs: a high-quality Farkas ray seen along the way settles
    // the status even when the final iterate degenerated. Rays in the gray
    // zone above eps_feas can coexist with exactly feasible (empty-interior)
    // problems, so those are confirmed by a phase-1 solve, which always has
    // an interior point.
    let cert_tol = settings.eps_feas.max(1e-6);
    if let Some((resid, y_ray, z_ray)) = best_pinf {
        let confirmed = resid <= settings.eps_feas
            || (allow_phase1
                && phase1_infeasibility(sf, settings)
                    .map_or(false, |t| t > 1e-7 * (1.0 + norm_inf(&sf.b))));
        if resid <= cert_tol && confirmed {
            let mut res = best.map(|(_, b)| *b).unwrap_or_else(|| SolveResult {
                status: SolveStatus::PrimalInfeasible,
                x: vec![0.0; n],
                y: vec![0.0; m],
                z: vec![0.0; n],
                objective: f64::NAN,
                dual_objective: f64::NAN,
                iterations,
                residuals: ResidualReport::default(),
                certificate: None,
            });
            res.status = SolveStatus::PrimalInfeasible;
            res.certificate = Some(InfeasCert::Primal {
                y: y_ray,
                z: z_ray,
                residual: resid,
            });
            res.iterations = iterations;
            return res;
        }
    }
    if let Some((resid, x_ray)) = best_dinf {
        if resid <= cert_tol {
            let mut res = best.map(|(_, b)| *b).unwrap_or_else(|| SolveResult {
                status: SolveStatus::DualInfeasible,
                x: vec![0.0; n],
                y: vec![0.0; m],
                z: vec![0.0; n],
                objective: f64::NAN,
                dual_objective: f64::NAN,
                iterations,
                residuals: ResidualReport::default(),
                certificate: None,
            });
            res.status = SolveStatus::DualInfeasible;
            res.certificate = Some(InfeasCert::Dual {
                x: x_ray,
                residual: resid,
            });
            res.iterations = iterations;
            return res;
        }
    }
    match best {
        Some((_, mut res)) => {
            res.status = if clean_exit {
                SolveStatus::IterationLimit
            } else {
                SolveStatus::NumericalError
            };
            res.iterations = iterations;
            *res
        }
        None => SolveResult {
            status: SolveStatus::NumericalError,
            x: vec![0.0; n],
            y: vec![0.0; m],
            z: vec![0.0; n],
            objective: f64::NAN,
            dual_objective: f64::NAN,
            iterations,
            residuals: ResidualReport::default(),
            certificate: None,
        },
    }
}

fn fill_kkt(kkt: &mut Csc, slots: &[Slot], scaling: &Scaling, delta: f64) {
    for (k, slot) in slots.iter().enumerate() {
        kkt.values[k] = match *slot {
            Slot::XDiag => delta,
            Slot::NonnegDiag(loc) => {
                let wv = scaling.nonneg_w_at(loc);
                1.0 / (wv * wv) + delta
            }
            Slot::Soc(bi, i, j) => scaling.soc_h_at(bi, i, j) + if i == j { delta } else { 0.0 },
            Slot::AEntry(v) => v,
            Slot::YDiag => -delta,
        };
    }
}

fn step_length(
    ops: &ConeOps,
    x: &[f64],
    z: &[f64],
    tau: f64,
    kappa: f64,
    d: &Direction,
    frac: f64,
) -> f64 {
    let mut a = ops.step_to_boundary(x, &d.dx);
    a = a.min(ops.step_to_boundary(z, &d.dz));
    if d.dtau < 0.0 {
        a = a.min(-tau / d.dtau);
    }
    if d.dkappa < 0.0 {
        a = a.min(-kappa / d.dkappa);
    }
    (frac * a).min(1.0)
}

// ---------------------------------------------------------------------------
// Named-space interface
// ---------------------------------------------------------------------------

/// Dual multipliers in named space. Orientation: for the maximization
/// Lagrangian `obj + sum sigma_r eq_r + sum eta_r ineq_r + sum zeta'(t;u)
/// + sum lo_j (v_j - lb_j) + sum hi_j (ub_j - v_j)` stationarity holds at the
/// reported solution, `eta, lo, hi >= 0`, each SOC dual lies in the cone, and
/// rotated duals `(zv, zw, zu)` satisfy `2 zv zw >= ||zu||^2`.
#[derive(Clone, Debug, Default)]
pub struct NamedDuals {
    pub eq: Vec<f64>,
    pub ineq: Vec<f64>,
    pub soc: Vec<Vec<f64>>,
    pub rsoc: Vec<Vec<f64>>,
    pub var_lo: Vec<f64>,
    pub var_hi: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct NamedSolution {
    pub status: SolveStatus,
    pub vars: Vec<f64>,
    /// Named (maximization) objective value.
    pub objective: f64,
    pub duals: NamedDuals,
    pub iterations: usize,
    pub residuals: ResidualReport,
    pub certificate: Option<InfeasCert>,
}

impl NamedSolution {
    pub fn value(&self, v: crate::conic::VarId) -> f64 {
        self.vars[v.index()]
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Lifts a named program, solves it, and maps primal and dual information
/// back to named space.
pub fn solve_named(
    p: &ConicProgram,
    settings: &SolveSettings,
) -> Result<NamedSolution, crate::conic::ConicError> {
    let (sf, map) = p.to_standard_form()?;
    let res = solve(&sf, settings);
    Ok(named_solution(p, &map, res))
}

pub fn named_solution(p: &ConicProgram, map: &NamedMap, res: SolveResult) -> NamedSolution {
    let vars = map.primal(&res.x);
    let objective = p.objective().eval(&vars);
    let duals = recover_duals(map, &res);
    NamedSolution {
        status: res.status,
        vars,
        objective,
        duals,
        iterations: res.iterations,
        residuals: res.residuals,
        certificate: res.certificate,
    }
}

fn recover_duals(map: &NamedMap, res: &SolveResult) -> NamedDuals {
    let eq = map.eq_rows.iter().map(|&r| res.y[r]).collect();
    let ineq = map.ineq_rows.iter().map(|&r| res.y[r]).collect();
    let soc = map
        .soc_locs
        .iter()
        .map(|loc| res.z[loc.first_col..loc.first_col + loc.dim].to_vec())
        .collect();
    let rsoc = map
        .rsoc_locs
        .iter()
        .map(|loc| {
            let zb = &res.z[loc.first_col..loc.first_col + loc.dim];
            let mut out = Vec::with_capacity(loc.dim);
            out.push(zb[0] + zb[1]);
            out.push(zb[0] - zb[1]);
            out.extend(zb[2..].iter().map(|v| std::f64::consts::SQRT_2 * v));
            out
        })
        .collect();
    let mut var_lo = vec![0.0; map.var_loc.len()];
    let mut var_hi = vec![0.0; map.var_loc.len()];
    for (j, loc) in map.var_loc.iter().enumerate() {
        if let VarLoc::Col { col, sign, .. } = *loc {
            if sign > 0.0 {
                var_lo[j] = res.z[col];
            } else {
                var_hi[j] = res.z[col];
            }
            if let Some((_, row)) = map.box_rows[j] {
                var_hi[j] = -res.y[row];
            }
        }
    }
    NamedDuals {
        eq,
        ineq,
        soc,
        rsoc,
        var_lo,
        var_hi,
    }
}
