//! Growth kinetics and their conic encodings.
//!
//! The conversion rate in a tank is `r(s, x) = mu(s, x) x` with either the
//! substrate-limited (Monod) or ratio-limited (Contois) growth law. The
//! relaxed constraint `T <= r(S, X)` has an exact second-order-cone form for
//! Contois and for Monod under constant biomass; the general Monod equality
//! is outer-approximated by convex/concave envelopes of the quotient `T/S`
//! over a bounding box. Linear interpolator rows bound `T` from below when
//! the relaxation is not exact.
//!
//! Cone blocks are emitted against symbolic per-tank variables so the model
//! assembly can splice them at any time period.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthKind {
    /// mu = mu_max s / (K + s); biomass is a state variable.
    Monod,
    /// mu = mu_max s / (K x + s); kinetics are the perspective of Monod.
    Contois,
    /// Monod with biomass frozen at a per-tank constant.
    MonodConstantBiomass { x_c_kg_per_m3: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthParams {
    /// Maximum specific growth rate, 1/h.
    pub mu_max_per_h: f64,
    /// Half-saturation constant: kg/m^3 for Monod, dimensionless for Contois.
    pub k: f64,
    /// Yield of substrate-to-biomass conversion.
    pub y: f64,
    pub kind: GrowthKind,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GrowthError {
    #[error("operation requires {want} kinetics, growth parameters use {got}")]
    WrongKind {
        want: &'static str,
        got: &'static str,
    },
    #[error("bounds box is empty or not finite for tank {tank}")]
    InvalidBounds { tank: usize },
}

impl GrowthParams {
    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            GrowthKind::Monod => "monod",
            GrowthKind::Contois => "contois",
            GrowthKind::MonodConstantBiomass { .. } => "monod_constant_biomass",
        }
    }

    /// Per-tank biomass constant for the constant-biomass law.
    pub fn x_c(&self, tank: usize) -> Option<f64> {
        match &self.kind {
            GrowthKind::MonodConstantBiomass { x_c_kg_per_m3 } => {
                Some(x_c_kg_per_m3[tank.min(x_c_kg_per_m3.len() - 1)])
            }
            _ => None,
        }
    }

    /// Kinetics r(s, x) = mu(s, x) x. For the constant-biomass law, `x` is
    /// the biomass constant the caller supplies (tank-dependent).
    pub fn kinetics(&self, s: f64, x: f64) -> f64 {
        let mu = self.mu_max_per_h;
        match self.kind {
            GrowthKind::Monod | GrowthKind::MonodConstantBiomass { .. } => {
                mu * s * x / (self.k + s)
            }
            GrowthKind::Contois => {
                let den = self.k * x + s;
                if den <= 0.0 {
                    // continuity along rays into the origin
                    0.0
                } else {
                    mu * s * x / den
                }
            }
        }
    }

    /// Kinetics at a tank, resolving constant biomass from the parameters.
    pub fn kinetics_at(&self, tank: usize, s: f64, x: f64) -> f64 {
        match self.x_c(tank) {
            Some(xc) => self.kinetics(s, xc),
            None => self.kinetics(s, x),
        }
    }

    /// Partial derivatives (dr/ds, dr/dx) of the kinetics. For constant
    /// biomass, dr/dx = 0 and `x` is the biomass constant.
    pub fn kinetics_grad(&self, s: f64, x: f64) -> (f64, f64) {
        let mu = self.mu_max_per_h;
        let k = self.k;
        match self.kind {
            GrowthKind::Monod => {
                let den = (k + s) * (k + s);
                (mu * x * k / den, mu * s / (k + s))
            }
            GrowthKind::MonodConstantBiomass { .. } => {
                let den = (k + s) * (k + s);
                (mu * x * k / den, 0.0)
            }
            GrowthKind::Contois => {
                let den = (k * x + s) * (k * x + s);
                if den <= 0.0 {
                    (0.0, 0.0)
                } else {
                    (mu * k * x * x / den, mu * s * s / den)
                }
            }
        }
    }

    /// The sign condition behind relaxation exactness:
    /// `(1/y) dr/ds - dr/dx` at a point. Nonnegative values support
    /// exactness of the relaxed growth constraint.
    pub fn exactness_margin(&self, s: f64, x: f64) -> f64 {
        let (ds, dx) = self.kinetics_grad(s, x);
        ds / self.y - dx
    }
}

/// Box bounds per tank for S, X, and the induced bounds on T.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsBox {
    pub s_lo: Vec<f64>,
    pub s_hi: Vec<f64>,
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
    pub t_lo: Vec<f64>,
    pub t_hi: Vec<f64>,
}

impl BoundsBox {
    pub fn n(&self) -> usize {
        self.s_lo.len()
    }

    pub fn is_valid_for(&self, tank: usize) -> bool {
        let ok = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && lo <= hi && lo >= 0.0;
        ok(self.s_lo[tank], self.s_hi[tank])
            && ok(self.x_lo[tank], self.x_hi[tank])
            && ok(self.t_lo[tank], self.t_hi[tank])
    }
}

/// Steady-state variable bounds from the inflow data: the substrate in any
/// tank never exceeds the largest inflow concentration, biomass is squeezed
/// between the smallest inflow and the largest total-mass inflow, and the T
/// bounds follow by monotonicity of the kinetics.
pub fn steady_state_bounds(g: &GrowthParams, s_in: &[f64], x_in: &[f64]) -> BoundsBox {
    let n = s_in.len();
    let s_hi_all = s_in.iter().cloned().fold(0.0f64, f64::max);
    let x_lo_all = x_in
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
        .min(f64::INFINITY);
    let x_hi_all = x_in
        .iter()
        .zip(s_in)
        .map(|(x, s)| x + g.y * s)
        .fold(0.0f64, f64::max);
    let mut b = BoundsBox {
        s_lo: vec![0.0; n],
        s_hi: vec![s_hi_all; n],
        x_lo: vec![x_lo_all; n],
        x_hi: vec![x_hi_all; n],
        t_lo: vec![0.0; n],
        t_hi: vec![0.0; n],
    };
    for i in 0..n {
        if let Some(xc) = g.x_c(i) {
            b.x_lo[i] = xc;
            b.x_hi[i] = xc;
        }
        b.t_lo[i] = g.kinetics(b.s_lo[i], b.x_lo[i]);
        b.t_hi[i] = g.kinetics(b.s_hi[i], b.x_hi[i]);
    }
    b
}

/// Symbolic per-tank variables a cone block refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GrowthVar {
    S(usize),
    X(usize),
    T(usize),
    /// Quotient auxiliary (T/S) of the envelope.
    Beta(usize),
    Gamma(usize),
    Psi(usize),
}

/// Affine expression over growth variables.
#[derive(Clone, Debug, PartialEq)]
pub struct GLin {
    pub terms: Vec<(GrowthVar, f64)>,
    pub constant: f64,
}

impl GLin {
    pub fn new() -> Self {
        GLin {
            terms: Vec::new(),
            constant: 0.0,
        }
    }

    pub fn var(v: GrowthVar) -> Self {
        GLin {
            terms: vec![(v, 1.0)],
            constant: 0.0,
        }
    }

    pub fn term(mut self, v: GrowthVar, c: f64) -> Self {
        self.terms.push((v, c));
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn eval(&self, point: &dyn Fn(GrowthVar) -> f64) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * point(v)).sum::<f64>()
    }
}

impl Default for GLin {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Clone, Debug)]
pub enum GrowthRow {
    /// expr >= 0
    Nonneg(GLin),
    /// expr == 0
    Zero(GLin),
    /// ||u|| <= t
    Soc { t: GLin, u: Vec<GLin> },
    /// 2 v w >= sum u_i^2 with v, w >= 0
    RotatedSoc { v: GLin, w: GLin, u: Vec<GLin> },
}

/// A bundle of rows plus the auxiliary variables they introduce.
#[derive(Clone, Debug, Default)]
pub struct ConeBlock {
    pub rows: Vec<GrowthRow>,
    pub aux: Vec<GrowthVar>,
}

impl ConeBlock {
    /// Largest violation at a point (for sampling oracles in tests).
    pub fn violation(&self, point: &dyn Fn(GrowthVar) -> f64) -> f64 {
        let mut worst: f64 = 0.0;
        for row in &self.rows {
            let v = match row {
                GrowthRow::Nonneg(e) => -e.eval(point),
                GrowthRow::Zero(e) => e.eval(point).abs(),
                GrowthRow::Soc { t, u } => {
                    let tv = t.eval(point);
                    let un = u.iter().map(|e| e.eval(point).powi(2)).sum::<f64>().sqrt();
                    un - tv
                }
                GrowthRow::RotatedSoc { v, w, u } => {
                    let vv = v.eval(point);
                    let wv = w.eval(point);
                    let un2 = u.iter().map(|e| e.eval(point).powi(2)).sum::<f64>();
                    (un2 - 2.0 * vv * wv).max(-vv).max(-wv)
                }
            };
            worst = worst.max(v);
        }
        worst
    }

    pub fn n_soc(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| matches!(r, GrowthRow::Soc { .. }))
            .count()
    }

    pub fn n_rotated(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| matches!(r, GrowthRow::RotatedSoc { .. }))
            .count()
    }
}

/// Cone encoding of `T <= mu S X / (K X + S)` for the ratio-limited law:
/// with `St = mu S` and `Tt = K T`, the constraint pair is
/// `||(St, Tt, mu K X)|| <= mu K X + St - Tt` and `St - Tt >= 0`.
pub fn contois_cone(tank: usize, g: &GrowthParams) -> Result<ConeBlock, GrowthError> {
    if !matches!(g.kind, GrowthKind::Contois) {
        return Err(GrowthError::WrongKind {
            want: "contois",
            got: g.kind_name(),
        });
    }
    let mu = g.mu_max_per_h;
    let k = g.k;
    let s = GrowthVar::S(tank);
    let x = GrowthVar::X(tank);
    let t = GrowthVar::T(tank);
    let st = GLin::new().term(s, mu);
    let tt = GLin::new().term(t, k);
    let mkx = GLin::new().term(x, mu * k);
    let radius = GLin::new().term(x, mu * k).term(s, mu).term(t, -k);
    Ok(ConeBlock {
        rows: vec![
            GrowthRow::Soc {
                t: radius,
                u: vec![st.clone(), tt.clone(), mkx],
            },
            GrowthRow::Nonneg(GLin::new().term(s, mu).term(t, -k)),
        ],
        aux: vec![],
    })
}

/// Cone encoding of `T <= mu S xc / (K + S)` under constant biomass:
/// with `Sh = mu xc S` and `Th = K T`, the pair is
/// `||(Sh, Th, mu K xc)|| <= mu K xc + Sh - Th` and `Sh - Th >= 0`.
pub fn monod_constx_cone(tank: usize, g: &GrowthParams) -> Result<ConeBlock, GrowthError> {
    let Some(xc) = g.x_c(tank) else {
        return Err(GrowthError::WrongKind {
            want: "monod_constant_biomass",
            got: g.kind_name(),
        });
    };
    let mu = g.mu_max_per_h;
    let k = g.k;
    let s = GrowthVar::S(tank);
    let t = GrowthVar::T(tank);
    let sh = GLin::new().term(s, mu * xc);
    let th = GLin::new().term(t, k);
    let konst = GLin::new().plus(mu * k * xc);
    let radius = GLin::new().term(s, mu * xc).term(t, -k).plus(mu * k * xc);
    Ok(ConeBlock {
        rows: vec![
            GrowthRow::Soc {
                t: radius,
                u: vec![sh, th, konst],
            },
            GrowthRow::Nonneg(GLin::new().term(s, mu * xc).term(t, -k)),
        ],
        aux: vec![],
    })
}

/// Envelope relaxation of the Monod equality `mu X = T + K T/S` over a box.
/// `beta` stands for T/S and is squeezed between its concave overestimator
/// (two linear rows) and convex underestimator (two rotated cones plus
/// linear rows). Box rows for S, X, T are included; they are valid
/// steady-state bounds whenever the box is.
pub fn monod_envelope(
    tank: usize,
    g: &GrowthParams,
    b: &BoundsBox,
) -> Result<ConeBlock, GrowthError> {
    if !matches!(g.kind, GrowthKind::Monod) {
        return Err(GrowthError::WrongKind {
            want: "monod",
            got: g.kind_name(),
        });
    }
    if !b.is_valid_for(tank) {
        return Err(GrowthError::InvalidBounds { tank });
    }
    let mu = g.mu_max_per_h;
    let k = g.k;
    let s = GrowthVar::S(tank);
    let x = GrowthVar::X(tank);
    let t = GrowthVar::T(tank);
    let beta = GrowthVar::Beta(tank);
    let gamma = GrowthVar::Gamma(tank);
    let psi = GrowthVar::Psi(tank);

    let (s_hi, x_lo, x_hi) = (b.s_hi[tank], b.x_lo[tank], b.x_hi[tank]);
    // a zero lower substrate bound leaves the quotient T/S unbounded; the
    // envelope rows use a clamped floor and force t_lo = 0 in that case
    let s_lo_env = if b.s_lo[tank] <= 0.0 {
        1e-6 * s_hi
    } else {
        b.s_lo[tank]
    };
    let t_lo = if b.s_lo[tank] <= 0.0 {
        0.0
    } else {
        b.t_lo[tank]
    };
    let t_hi = mu * s_hi * x_hi / (k + s_hi);

    let mut rows = Vec::new();
    // box rows
    rows.push(GrowthRow::Nonneg(GLin::var(s).plus(-b.s_lo[tank])));
    rows.push(GrowthRow::Nonneg(GLin::new().term(s, -1.0).plus(s_hi)));
    rows.push(GrowthRow::Nonneg(GLin::var(x).plus(-x_lo)));
    rows.push(GrowthRow::Nonneg(GLin::new().term(x, -1.0).plus(x_hi)));
    rows.push(GrowthRow::Nonneg(GLin::var(t).plus(-t_lo)));
    rows.push(GrowthRow::Nonneg(GLin::new().term(t, -1.0).plus(t_hi)));
    // the defining equality mu X = T + K beta
    rows.push(GrowthRow::Zero(
        GLin::new().term(x, mu).term(t, -1.0).term(beta, -k),
    ));
    // concave overestimator of beta
    rows.push(GrowthRow::Nonneg(
        GLin::new()
            .term(t, s_hi)
            .term(s, -t_lo)
            .term(beta, -s_lo_env * s_hi)
            .plus(s_lo_env * t_lo),
    ));
    rows.push(GrowthRow::Nonneg(
        GLin::new()
            .term(t, s_lo_env)
            .term(s, -t_hi)
            .term(beta, -s_lo_env * s_hi)
            .plus(s_hi * t_hi),
    ));
    // convex underestimator
    let span = t_hi - t_lo;
    if span > 1e-12 * t_hi.max(1.0) {
        // lam1 = (t_hi - T)/span, lam2 = (T - t_lo)/span
        let lam1 = GLin::new().term(t, -1.0 / span).plus(t_hi / span);
        let lam2 = GLin::new().term(t, 1.0 / span).plus(-t_lo / span);
        if t_lo > 0.0 {
            // gamma psi >= t_lo lam1^2
            let u = lam1.clone().scale_by((2.0 * t_lo).sqrt());
            rows.push(GrowthRow::RotatedSoc {
                v: GLin::var(gamma),
                w: GLin::var(psi),
                u: vec![u],
            });
        }
        // (beta - gamma)(S - psi) >= t_hi lam2^2
        let u = lam2.clone().scale_by((2.0 * t_hi).sqrt());
        rows.push(GrowthRow::RotatedSoc {
            v: GLin::var(beta).term(gamma, -1.0),
            w: GLin::var(s).term(psi, -1.0),
            u: vec![u],
        });
        // psi window: max{s_lo lam1, S - s_hi lam2} <= psi <= min{s_hi lam1, S - s_lo lam2}
        rows.push(GrowthRow::Nonneg(
            GLin::var(psi)
                .term(t, s_lo_env / span)
                .plus(-s_lo_env * t_hi / span),
        ));
        rows.push(GrowthRow::Nonneg(
            GLin::var(psi)
                .term(s, -1.0)
                .term(t, s_hi / span)
                .plus(-s_hi * t_lo / span),
        ));
        rows.push(GrowthRow::Nonneg(
            GLin::new()
                .term(psi, -1.0)
                .term(t, -s_hi / span)
                .plus(s_hi * t_hi / span),
        ));
        rows.push(GrowthRow::Nonneg(
            GLin::new()
                .term(psi, -1.0)
                .term(s, 1.0)
                .term(t, -s_lo_env / span)
                .plus(s_lo_env * t_lo / span),
        ));
    } else {
        // degenerate T window: the equality plus the T box pins beta
    }
    rows.push(GrowthRow::Nonneg(GLin::var(beta).term(gamma, -1.0)));
    rows.push(GrowthRow::Nonneg(GLin::var(gamma)));
    rows.push(GrowthRow::Nonneg(GLin::var(psi)));

    Ok(ConeBlock {
        rows,
        aux: vec![beta, gamma, psi],
    })
}

impl GLin {
    fn scale_by(self, c: f64) -> GLin {
        GLin {
            terms: self.terms.into_iter().map(|(v, a)| (v, a * c)).collect(),
            constant: self.constant * c,
        }
    }
}

/// Linear lower bounds on T for the ratio-limited law: interpolators with X
/// or S pinned to its lower corner. Rows with a degenerate width are
/// dropped.
pub fn contois_underestimator(
    tank: usize,
    g: &GrowthParams,
    b: &BoundsBox,
) -> Result<ConeBlock, GrowthError> {
    if !matches!(g.kind, GrowthKind::Contois) {
        return Err(GrowthError::WrongKind {
            want: "contois",
            got: g.kind_name(),
        });
    }
    if !b.is_valid_for(tank) {
        return Err(GrowthError::InvalidBounds { tank });
    }
    let (s_lo, s_hi) = (b.s_lo[tank], b.s_hi[tank]);
    let (x_lo, x_hi) = (b.x_lo[tank], b.x_hi[tank]);
    let t_corner = g.kinetics(s_lo, x_lo);
    let t_s = g.kinetics(s_hi, x_lo); // S at its upper corner, X pinned low
    let t_x = g.kinetics(s_lo, x_hi); // X at its upper corner, S pinned low
    let s = GrowthVar::S(tank);
    let x = GrowthVar::X(tank);
    let t = GrowthVar::T(tank);
    let mut rows = Vec::new();
    if s_hi - s_lo > 1e-12 {
        let slope = (t_s - t_corner) / (s_hi - s_lo);
        rows.push(GrowthRow::Nonneg(
            GLin::var(t).term(s, -slope).plus(slope * s_lo - t_corner),
        ));
    }
    if x_hi - x_lo > 1e-12 {
        let slope = (t_x - t_corner) / (x_hi - x_lo);
        rows.push(GrowthRow::Nonneg(
            GLin::var(t).term(x, -slope).plus(slope * x_lo - t_corner),
        ));
    }
    Ok(ConeBlock { rows, aux: vec![] })
}

/// Linear lower bound on T for the constant-biomass law: a single
/// interpolator in S.
pub fn monod_constx_underestimator(
    tank: usize,
    g: &GrowthParams,
    b: &BoundsBox,
) -> Result<ConeBlock, GrowthError> {
    let Some(xc) = g.x_c(tank) else {
        return Err(GrowthError::WrongKind {
            want: "monod_constant_biomass",
            got: g.kind_name(),
        });
    };
    if !b.is_valid_for(tank) {
        return Err(GrowthError::InvalidBounds { tank });
    }
    let (s_lo, s_hi) = (b.s_lo[tank], b.s_hi[tank]);
    let t_lo = g.kinetics(s_lo, xc);
    let t_hi = g.kinetics(s_hi, xc);
    let s = GrowthVar::S(tank);
    let t = GrowthVar::T(tank);
    let mut rows = Vec::new();
    if s_hi - s_lo > 1e-12 {
        let slope = (t_hi - t_lo) / (s_hi - s_lo);
        rows.push(GrowthRow::Nonneg(
            GLin::var(t).term(s, -slope).plus(slope * s_lo - t_lo),
        ));
    }
    Ok(ConeBlock { rows, aux: vec![] })
}
