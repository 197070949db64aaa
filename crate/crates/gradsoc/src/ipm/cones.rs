//! Cone operations for the interior-point solver: Nesterov-Todd scalings,
//! Jordan-algebra products, and step-to-boundary computations over a product
//! of free, nonnegative, and second-order cones.
//!
//! Conventions: vectors are full standard-form length; the free block is
//! inert (scaling leaves it untouched, dual iterates keep zeros there).
//! The scaling point satisfies `lambda = W^{-1} x = W z` with W symmetric
//! positive definite on each cone block.

use crate::conic::ConeLayout;

/// Per-iteration NT scaling data.
pub struct Scaling {
    /// w_i = sqrt(x_i / z_i) per nonnegative coordinate.
    nonneg_w: Vec<f64>,
    /// Dense per-block scaling matrices for the second-order cones.
    soc: Vec<SocScaling>,
    /// Scaled point, full length (zeros on the free block).
    pub lambda: Vec<f64>,
}

struct SocScaling {
    q: usize,
    /// q x q dense W (row major).
    w: Vec<f64>,
    /// q x q dense W^{-1}.
    w_inv: Vec<f64>,
    /// q x q dense W^{-2} (KKT diagonal block).
    h: Vec<f64>,
}

impl Scaling {
    pub fn nonneg_w_at(&self, i: usize) -> f64 {
        self.nonneg_w[i]
    }

    /// Entry (i, j) of the dense W^{-2} block of cone `b`.
    pub fn soc_h_at(&self, b: usize, i: usize, j: usize) -> f64 {
        let s = &self.soc[b];
        s.h[i * s.q + j]
    }
}

pub struct ConeOps<'a> {
    pub layout: &'a ConeLayout,
}

fn dense_matvec(q: usize, m: &[f64], x: &[f64], y: &mut [f64]) {
    for i in 0..q {
        let mut acc = 0.0;
        for j in 0..q {
            acc += m[i * q + j] * x[j];
        }
        y[i] = acc;
    }
}

impl<'a> ConeOps<'a> {
    pub fn new(layout: &'a ConeLayout) -> Self {
        ConeOps { layout }
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// Barrier degree nu (one per nonneg entry, one per cone).
    pub fn degree(&self) -> usize {
        self.layout.barrier_degree()
    }

    fn blocks(&self) -> (usize, usize) {
        let c0 = self.layout.n_free;
        let s0 = c0 + self.layout.n_nonneg;
        (c0, s0)
    }

    /// Identity element on the cone part (zeros elsewhere).
    pub fn identity(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.dim()];
        let (c0, s0) = self.blocks();
        for v in e.iter_mut().take(s0).skip(c0) {
            *v = 1.0;
        }
        let mut at = s0;
        for &q in &self.layout.socs {
            e[at] = 1.0;
            at += q;
        }
        e
    }

    /// Cone-part inner product x'z.
    pub fn cone_dot(&self, x: &[f64], z: &[f64]) -> f64 {
        let c0 = self.layout.n_free;
        x[c0..].iter().zip(&z[c0..]).map(|(a, b)| a * b).sum()
    }

    /// Strict interior test on the cone part.
    pub fn is_interior(&self, x: &[f64]) -> bool {
        let (c0, s0) = self.blocks();
        if x[c0..s0].iter().any(|&v| v <= 0.0) {
            return false;
        }
        let mut at = s0;
        for &q in &self.layout.socs {
            let t = x[at];
            let n2: f64 = x[at + 1..at + q].iter().map(|v| v * v).sum();
            if t <= 0.0 || t * t <= n2 {
                return false;
            }
            at += q;
        }
        true
    }

    /// NT scaling from a strictly interior primal-dual pair.
    pub fn scaling(&self, x: &[f64], z: &[f64]) -> Option<Scaling> {
        let (c0, s0) = self.blocks();
        let mut nonneg_w = Vec::with_capacity(self.layout.n_nonneg);
        let mut lambda = vec![0.0; self.dim()];
        for i in c0..s0 {
            if x[i] <= 0.0 || z[i] <= 0.0 {
                return None;
            }
            nonneg_w.push((x[i] / z[i]).sqrt());
            lambda[i] = (x[i] * z[i]).sqrt();
        }
        let mut soc = Vec::with_capacity(self.layout.socs.len());
        let mut at = s0;
        for &q in &self.layout.socs {
            let xb = &x[at..at + q];
            let zb = &z[at..at + q];
            let a2 = xb[0] * xb[0] - xb[1..].iter().map(|v| v * v).sum::<f64>();
            let b2 = zb[0] * zb[0] - zb[1..].iter().map(|v| v * v).sum::<f64>();
            if a2 <= 0.0 || b2 <= 0.0 || xb[0] <= 0.0 || zb[0] <= 0.0 {
                return None;
            }
            let a = a2.sqrt();
            let b = b2.sqrt();
            let xh: Vec<f64> = xb.iter().map(|v| v / a).collect();
            let zh: Vec<f64> = zb.iter().map(|v| v / b).collect();
            let dotxz: f64 = xh.iter().zip(&zh).map(|(p, r)| p * r).sum();
            let gamma = ((1.0 + dotxz) / 2.0).sqrt();
            // w_bar = (x_hat + J z_hat) / (2 gamma)
            let mut wb = vec![0.0; q];
            wb[0] = (xh[0] + zh[0]) / (2.0 * gamma);
            for k in 1..q {
                wb[k] = (xh[k] - zh[k]) / (2.0 * gamma);
            }
            let eta = (a / b).sqrt();
            // wb is the J-normalized NT point; the scaling matrix is the
            // SPD square root of its quadratic representation:
            //   W = eta [[w0, w1'], [w1, I + w1 w1'/(1+w0)]]
            //   W^{-1} = same form at J wb, divided by eta
            //   H = W^{-2} = (2 (J wb)(J wb)' - J) / eta^2
            let msqrt = |u: &[f64], scale: f64| -> Vec<f64> {
                let mut m = vec![0.0; q * q];
                m[0] = u[0] * scale;
                for i in 1..q {
                    m[i] = u[i] * scale;
                    m[i * q] = u[i] * scale;
                    for j in 1..q {
                        let id = if i == j { 1.0 } else { 0.0 };
                        m[i * q + j] = (id + u[i] * u[j] / (1.0 + u[0])) * scale;
                    }
                }
                m
            };
            let jwb: Vec<f64> = wb
                .iter()
                .enumerate()
                .map(|(i, &v)| if i == 0 { v } else { -v })
                .collect();
            let w = msqrt(&wb, eta);
            let w_inv = msqrt(&jwb, 1.0 / eta);
            let mut h = vec![0.0; q * q];
            for i in 0..q {
                for j in 0..q {
                    let jdiag = if i != j {
                        0.0
                    } else if i == 0 {
                        1.0
                    } else {
                        -1.0
                    };
                    h[i * q + j] = (2.0 * jwb[i] * jwb[j] - jdiag) / (eta * eta);
                }
            }
            // lambda block via the stable gamma formula
            let sab = (a * b).sqrt();
            let denom = xh[0] + zh[0] + 2.0 * gamma;
            lambda[at] = sab * gamma;
            for k in 1..q {
                lambda[at + k] = sab * ((gamma + zh[0]) * xh[k] + (gamma + xh[0]) * zh[k]) / denom;
            }
            soc.push(SocScaling { q, w, w_inv, h });
            at += q;
        }
        Some(Scaling {
            nonneg_w,
            soc,
            lambda,
        })
    }

    /// out = W v on the cone part (free part zeroed).
    pub fn apply_w(&self, s: &Scaling, v: &[f64], out: &mut [f64]) {
        let (c0, s0) = self.blocks();
        out[..c0].iter_mut().for_each(|o| *o = 0.0);
        for i in c0..s0 {
            out[i] = s.nonneg_w[i - c0] * v[i];
        }
        let mut at = s0;
        for (bi, &q) in self.layout.socs.iter().enumerate() {
            let mut tmp = vec![0.0; q];
            dense_matvec(q, &s.soc[bi].w, &v[at..at + q], &mut tmp);
            out[at..at + q].copy_from_slice(&tmp);
            at += q;
        }
    }

    /// out = W^{-1} v on the cone part.
    pub fn apply_w_inv(&self, s: &Scaling, v: &[f64], out: &mut [f64]) {
        let (c0, s0) = self.blocks();
        out[..c0].iter_mut().for_each(|o| *o = 0.0);
        for i in c0..s0 {
            out[i] = v[i] / s.nonneg_w[i - c0];
        }
        let mut at = s0;
        for (bi, &q) in self.layout.socs.iter().enumerate() {
            let mut tmp = vec![0.0; q];
            dense_matvec(q, &s.soc[bi].w_inv, &v[at..at + q], &mut tmp);
            out[at..at + q].copy_from_slice(&tmp);
            at += q;
        }
    }

    /// out = H v = W^{-2} v on the cone part (free part zeroed).
    pub fn apply_h(&self, s: &Scaling, v: &[f64], out: &mut [f64]) {
        let (c0, s0) = self.blocks();
        out[..c0].iter_mut().for_each(|o| *o = 0.0);
        for i in c0..s0 {
            let w = s.nonneg_w[i - c0];
            out[i] = v[i] / (w * w);
        }
        let mut at = s0;
        for (bi, &q) in self.layout.socs.iter().enumerate() {
            let mut tmp = vec![0.0; q];
            dense_matvec(q, &s.soc[bi].h, &v[at..at + q], &mut tmp);
            out[at..at + q].copy_from_slice(&tmp);
            at += q;
        }
    }

    /// H block entries for the KKT assembly: calls `f(i, j, value)` for the
    /// upper triangle (i <= j) of the cone-part Hessian, in global indices.
    pub fn h_upper_entries(&self, s: &Scaling, mut f: impl FnMut(usize, usize, f64)) {
        let (c0, s0) = self.blocks();
        for i in c0..s0 {
            let w = s.nonneg_w[i - c0];
            f(i, i, 1.0 / (w * w));
        }
        let mut at = s0;
        for (bi, &q) in self.layout.socs.iter().enumerate() {
            let h = &s.soc[bi].h;
            for i in 0..q {
                for j in i..q {
                    f(at + i, at + j, h[i * q + j]);
                }
            }
            at += q;
        }
    }

    /// Jordan product a o b on the cone part (free part zeroed).
    pub fn jordan_prod(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        let (c0, s0) = self.blocks();
        out[..c0].iter_mut().for_each(|o| *o = 0.0);
        for i in c0..s0 {
            out[i] = a[i] * b[i];
        }
        let mut at = s0;
        for &q in &self.layout.socs {
            let aa = &a[at..at + q];
            let bb = &b[at..at + q];
            let dot: f64 = aa.iter().zip(bb).map(|(p, r)| p * r).sum();
            let a0 = aa[0];
            let b0 = bb[0];
            out[at] = dot;
            for k in 1..q {
                out[at + k] = a0 * bb[k] + b0 * aa[k];
            }
            at += q;
        }
    }

    /// out = lambda \ d (inverse Jordan product against the scaled point).
    pub fn lambda_div(&self, s: &Scaling, d: &[f64], out: &mut [f64]) {
        let (c0, s0) = self.blocks();
        out[..c0].iter_mut().for_each(|o| *o = 0.0);
        for i in c0..s0 {
            out[i] = d[i] / s.lambda[i];
        }
        let mut at = s0;
        for &q in &self.layout.socs {
            let lb = &s.lambda[at..at + q];
            let db = &d[at..at + q];
            let det = lb[0] * lb[0] - lb[1..].iter().map(|v| v * v).sum::<f64>();
            let l1d1: f64 = lb[1..].iter().zip(&db[1..]).map(|(p, r)| p * r).sum();
            let u0 = (lb[0] * db[0] - l1d1) / det;
            out[at] = u0;
            for k in 1..q {
                out[at + k] = (db[k] - u0 * lb[k]) / lb[0];
            }
            at += q;
        }
    }

    /// Largest step alpha such that p + alpha dp stays in the (closed) cone,
    /// for p strictly interior. Returns f64::INFINITY when unbounded.
    pub fn step_to_boundary(&self, p: &[f64], dp: &[f64]) -> f64 {
        let (c0, s0) = self.blocks();
        let mut alpha = f64::INFINITY;
        for i in c0..s0 {
            if dp[i] < 0.0 {
                alpha = alpha.min(-p[i] / dp[i]);
            }
        }
        let mut at = s0;
        for &q in &self.layout.socs {
            let pb = &p[at..at + q];
            let db = &dp[at..at + q];
            let c = (pb[0] * pb[0] - pb[1..].iter().map(|v| v * v).sum::<f64>()).max(0.0);
            let b = 2.0
                * (pb[0] * db[0]
                    - pb[1..]
                        .iter()
                        .zip(&db[1..])
                        .map(|(x, y)| x * y)
                        .sum::<f64>());
            let a = db[0] * db[0] - db[1..].iter().map(|v| v * v).sum::<f64>();
            let root = if a.abs() < 1e-300 {
                if b < 0.0 {
                    -c / b
                } else {
                    f64::INFINITY
                }
            } else {
                let disc = b * b - 4.0 * a * c;
                if a > 0.0 {
                    if disc >= 0.0 && b < 0.0 {
                        (-b - disc.sqrt()) / (2.0 * a)
                    } else {
                        f64::INFINITY
                    }
                } else {
                    // opens downward: exactly one positive root
                    (-b - disc.max(0.0).sqrt()) / (2.0 * a)
                }
            };
            if root.is_finite() && root >= 0.0 {
                alpha = alpha.min(root);
            }
            if db[0] < 0.0 {
                alpha = alpha.min(-pb[0] / db[0]);
            }
            at += q;
        }
        alpha
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> ConeLayout {
        ConeLayout {
            n_free: 1,
            n_nonneg: 2,
            socs: vec![3],
        }
    }

    #[test]
    fn scaling_maps_both_points_to_lambda() {
        let l = layout();
        let ops = ConeOps::new(&l);
        let x = vec![9.0, 2.0, 0.5, 2.0, 0.3, -0.7];
        let z = vec![0.0, 0.25, 4.0, 1.5, -0.2, 0.9];
        assert!(ops.is_interior(&x) && ops.is_interior(&z));
        let s = ops.scaling(&x, &z).unwrap();
        let mut winv_x = vec![0.0; 6];
        ops.apply_w_inv(&s, &x, &mut winv_x);
        let mut w_z = vec![0.0; 6];
        ops.apply_w(&s, &z, &mut w_z);
        for i in 1..6 {
            assert!((winv_x[i] - w_z[i]).abs() < 1e-10, "i={i}");
            assert!((winv_x[i] - s.lambda[i]).abs() < 1e-10, "lambda i={i}");
        }
    }

    #[test]
    fn lambda_div_inverts_jordan_prod() {
        let l = layout();
        let ops = ConeOps::new(&l);
        let x = vec![0.0, 1.0, 2.0, 3.0, 1.0, -0.5];
        let z = vec![0.0, 2.0, 1.0, 2.5, 0.5, 0.5];
        let s = ops.scaling(&x, &z).unwrap();
        let d = vec![0.0, 0.7, -0.2, 1.1, 0.4, 0.3];
        let mut u = vec![0.0; 6];
        ops.lambda_div(&s, &d, &mut u);
        let mut back = vec![0.0; 6];
        ops.jordan_prod(&s.lambda, &u, &mut back);
        for i in 1..6 {
            assert!((back[i] - d[i]).abs() < 1e-10, "i={i}");
        }
    }

    #[test]
    fn step_to_boundary_is_tight() {
        let l = ConeLayout {
            n_free: 0,
            n_nonneg: 1,
            socs: vec![3],
        };
        let ops = ConeOps::new(&l);
        let p = vec![1.0, 2.0, 0.0, 0.0];
        let dp = vec![-0.5, -1.0, 1.0, 0.0];
        let a = ops.step_to_boundary(&p, &dp);
        // nonneg part hits zero at alpha=2; soc: (2-a)^2 = a^2 -> a = 1
        assert!((a - 1.0).abs() < 1e-12);
        // after stepping slightly less, still interior
        let stepped: Vec<f64> = p
            .iter()
            .zip(&dp)
            .map(|(pi, di)| pi + 0.999 * a * di)
            .collect();
        assert!(ops.is_interior(&stepped));
    }
}
