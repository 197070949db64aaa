//! Gradostat topology: tanks, pipes, and the compartmental system matrices.
//!
//! A network of `n` perfectly mixed tanks exchanges mass through directed
//! pipe flows and symmetric diffusion. The compartmental matrix `M` collects
//! flows (off-diagonal `M[i][j] = Q_{ji}`, the flow from tank j into tank i),
//! `L` collects pairwise diffusion, `C = diag(q_in)` and `G = diag(q_out)`.
//! Water conservation at each tank reads `(M + C) 1 = 0` columnwise and
//! `1'(M + G) = 0` rowwise; both are enforced here, with `q_in` derived from
//! the balance when a tank omits it.

use crate::linalg::Mat;
use serde::{Deserialize, Serialize};

pub const WATER_BALANCE_TOL: f64 = 1e-8;
pub const RANK_REL_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tank {
    /// Volume, m^3.
    pub volume_m3: f64,
    /// Water outflow, m^3/h.
    pub q_out_m3_per_h: f64,
    /// Water inflow, m^3/h; derived from the water balance when omitted.
    #[serde(default)]
    pub q_in_m3_per_h: Option<f64>,
    /// Substrate concentration of the inflow, kg/m^3.
    pub s_in_kg_per_m3: f64,
    /// Biomass concentration of the inflow, kg/m^3.
    pub x_in_kg_per_m3: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pipe {
    /// Source tank index (0-based).
    pub from: usize,
    /// Destination tank index (0-based).
    pub to: usize,
    /// Base flow, m^3/h (present even when the pipe is not activated).
    #[serde(default)]
    pub q0_m3_per_h: f64,
    /// Added flow when activated, m^3/h.
    #[serde(default)]
    pub q1_m3_per_h: f64,
    /// Base diffusion exchange, m^3/h.
    #[serde(default)]
    pub d0_m3_per_h: f64,
    /// Added diffusion when activated, m^3/h.
    #[serde(default)]
    pub d1_m3_per_h: f64,
    /// Installation cost (budget units).
    #[serde(default)]
    pub cost: f64,
    /// Whether activation of this pipe is a design decision.
    #[serde(default)]
    pub candidate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradostatNetwork {
    pub tanks: Vec<Tank>,
    pub pipes: Vec<Pipe>,
    pub growth: crate::growth::GrowthParams,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetworkError {
    #[error("activation vector has length {got}, expected {want} (one per candidate pipe)")]
    DimensionMismatch { got: usize, want: usize },
    #[error("derived water inflow of tank {tank} is negative ({value:.6})")]
    NegativeInflow { tank: usize, value: f64 },
    #[error(
        "given q_in of tank {tank} is {given:.6} but the water balance requires {required:.6}"
    )]
    InconsistentInflow {
        tank: usize,
        given: f64,
        required: f64,
    },
    #[error("pipe {index} connects tank {tank} to itself")]
    SelfLoop { index: usize, tank: usize },
    #[error("pipe {index} references tank {tank} but the network has {n} tanks")]
    BadTankIndex { index: usize, tank: usize, n: usize },
    #[error("tank {tank}: {what} is negative or not finite")]
    BadTankData { tank: usize, what: &'static str },
    #[error("system matrix is numerically singular (network is not outflow connected)")]
    SingularSystem,
}

/// The compartmental matrices of a network under a fixed activation.
#[derive(Clone, Debug)]
pub struct SystemMatrices {
    pub m: Mat,
    pub l: Mat,
    /// diag of water inflows.
    pub c: Mat,
    /// diag of water outflows.
    pub g: Mat,
    /// diag of tank volumes.
    pub v: Mat,
    pub q_in: Vec<f64>,
    pub q_out: Vec<f64>,
}

impl GradostatNetwork {
    pub fn n_tanks(&self) -> usize {
        self.tanks.len()
    }

    pub fn candidate_pipes(&self) -> Vec<usize> {
        (0..self.pipes.len())
            .filter(|&i| self.pipes[i].candidate)
            .collect()
    }

    pub fn s_in(&self) -> Vec<f64> {
        self.tanks.iter().map(|t| t.s_in_kg_per_m3).collect()
    }

    pub fn x_in(&self) -> Vec<f64> {
        self.tanks.iter().map(|t| t.x_in_kg_per_m3).collect()
    }

    pub fn volumes(&self) -> Vec<f64> {
        self.tanks.iter().map(|t| t.volume_m3).collect()
    }

    /// Structural validation plus water-balance satisfiability with all
    /// candidates off and all on.
    pub fn validate(&self) -> Result<(), NetworkError> {
        let n = self.n_tanks();
        for (i, t) in self.tanks.iter().enumerate() {
            if !(t.volume_m3 > 0.0) {
                return Err(NetworkError::BadTankData {
                    tank: i,
                    what: "volume",
                });
            }
            for (what, v) in [
                ("q_out", t.q_out_m3_per_h),
                ("s_in", t.s_in_kg_per_m3),
                ("x_in", t.x_in_kg_per_m3),
            ] {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(NetworkError::BadTankData { tank: i, what });
                }
            }
            if let Some(q) = t.q_in_m3_per_h {
                if !(q >= 0.0) || !q.is_finite() {
                    return Err(NetworkError::BadTankData {
                        tank: i,
                        what: "q_in",
                    });
                }
            }
        }
        for (idx, p) in self.pipes.iter().enumerate() {
            if p.from == p.to {
                return Err(NetworkError::SelfLoop {
                    index: idx,
                    tank: p.from,
                });
            }
            for tank in [p.from, p.to] {
                if tank >= n {
                    return Err(NetworkError::BadTankIndex {
                        index: idx,
                        tank,
                        n,
                    });
                }
            }
        }
        let k = self.candidate_pipes().len();
        self.assemble_matrices(&vec![0.0; k])?;
        self.assemble_matrices(&vec![1.0; k])?;
        Ok(())
    }

    /// Effective pipe rates under an activation vector over candidate pipes
    /// (values in [0, 1]; binary designs pass 0/1).
    fn effective_rates(&self, activation: &[f64]) -> Result<Vec<(f64, f64)>, NetworkError> {
        let cands = self.candidate_pipes();
        if activation.len() != cands.len() {
            return Err(NetworkError::DimensionMismatch {
                got: activation.len(),
                want: cands.len(),
            });
        }
        let mut next = 0usize;
        let rates = self
            .pipes
            .iter()
            .map(|p| {
                let lam = if p.candidate {
                    let l = activation[next];
                    next += 1;
                    l
                } else {
                    0.0
                };
                (
                    p.q0_m3_per_h + lam * p.q1_m3_per_h,
                    p.d0_m3_per_h + lam * p.d1_m3_per_h,
                )
            })
            .collect();
        Ok(rates)
    }

    /// Builds M, L, C, G, V for the given candidate activation, deriving
    /// water inflows from the balance. Rejects networks whose balance needs a
    /// negative inflow or contradicts a given one.
    pub fn assemble_matrices(&self, activation: &[f64]) -> Result<SystemMatrices, NetworkError> {
        let n = self.n_tanks();
        let rates = self.effective_rates(activation)?;
        let mut m = Mat::zeros(n, n);
        let mut l = Mat::zeros(n, n);
        let mut outflow_sum = vec![0.0; n]; // sum_j Q_ij
        let mut inflow_sum = vec![0.0; n]; // sum_j Q_ji
        for (p, &(q, d)) in self.pipes.iter().zip(&rates) {
            m[(p.to, p.from)] += q;
            outflow_sum[p.from] += q;
            inflow_sum[p.to] += q;
            l[(p.from, p.to)] += d;
            l[(p.to, p.from)] += d;
        }
        let q_out: Vec<f64> = self.tanks.iter().map(|t| t.q_out_m3_per_h).collect();
        let mut q_in = vec![0.0; n];
        for i in 0..n {
            let required = q_out[i] + outflow_sum[i] - inflow_sum[i];
            match self.tanks[i].q_in_m3_per_h {
                Some(given) => {
                    if (given - required).abs() > WATER_BALANCE_TOL * (1.0 + given.abs()) {
                        return Err(NetworkError::InconsistentInflow {
                            tank: i,
                            given,
                            required,
                        });
                    }
                    q_in[i] = given;
                }
                None => {
                    if required < -WATER_BALANCE_TOL {
                        return Err(NetworkError::NegativeInflow {
                            tank: i,
                            value: required,
                        });
                    }
                    q_in[i] = required.max(0.0);
                }
            }
        }
        for i in 0..n {
            m[(i, i)] = -q_out[i] - outflow_sum[i];
            let mut dsum = 0.0;
            for j in 0..n {
                if j != i {
                    dsum += l[(i, j)];
                }
            }
            l[(i, i)] = -dsum;
        }
        Ok(SystemMatrices {
            m,
            l,
            c: Mat::diag(&q_in),
            g: Mat::diag(&q_out),
            v: Mat::diag(&self.volumes()),
            q_in,
            q_out,
        })
    }
}

impl SystemMatrices {
    pub fn n(&self) -> usize {
        self.m.rows()
    }

    /// M + L.
    pub fn ml(&self) -> Mat {
        self.m.add(&self.l)
    }
}

/// True iff every tank has a directed flow path to a tank with outflow.
/// Edges follow water: i -> j when `M[j][i] > 0`. Agrees with invertibility
/// of M (tested property).
pub fn is_outflow_connected(mats: &SystemMatrices) -> bool {
    let n = mats.n();
    // reverse reachability from the outflow set over flow edges
    let mut good: Vec<bool> = (0..n).map(|i| mats.q_out[i] > 0.0).collect();
    let mut frontier: Vec<usize> = (0..n).filter(|&i| good[i]).collect();
    while let Some(j) = frontier.pop() {
        for i in 0..n {
            // i flows into j when M[j][i] > 0
            if !good[i] && mats.m[(j, i)] > 0.0 {
                good[i] = true;
                frontier.push(i);
            }
        }
    }
    good.into_iter().all(|g| g)
}

/// True iff the directed graph induced by the off-diagonal pattern of M + L
/// is strongly connected (diffusion edges count in both directions).
pub fn is_irreducible(mats: &SystemMatrices) -> bool {
    let n = mats.n();
    if n <= 1 {
        return true;
    }
    let edge = |i: usize, j: usize| mats.m[(j, i)] > 0.0 || mats.l[(i, j)] > 0.0;
    let reach = |rev: bool| {
        let mut seen = vec![false; n];
        seen[0] = true;
        let mut stack = vec![0usize];
        while let Some(u) = stack.pop() {
            for v in 0..n {
                let connected = if rev { edge(v, u) } else { edge(u, v) };
                if !seen[v] && connected {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(false) && reach(true)
}

/// The tanks that receive neither flow nor diffusion from any other tank.
pub fn unfed_tanks(mats: &SystemMatrices) -> Vec<usize> {
    let n = mats.n();
    (0..n)
        .filter(|&i| (0..n).all(|j| j == i || (mats.m[(i, j)] == 0.0 && mats.l[(i, j)] == 0.0)))
        .collect()
}

/// A gradostat is fully fed when every tank that receives nothing from other
/// tanks has strictly positive water, substrate, and biomass inflow.
pub fn is_fully_fed(net: &GradostatNetwork, activation: &[f64]) -> Result<bool, NetworkError> {
    let mats = net.assemble_matrices(activation)?;
    Ok(unfed_tanks(&mats).into_iter().all(|i| {
        mats.q_in[i] > 0.0 && net.tanks[i].s_in_kg_per_m3 > 0.0 && net.tanks[i].x_in_kg_per_m3 > 0.0
    }))
}

/// Steady-state total-mass vector `Z = -(M+L)^{-1} C (x_in + y s_in)` and a
/// flag for its strict positivity.
pub fn equilibrium_z(
    mats: &SystemMatrices,
    s_in: &[f64],
    x_in: &[f64],
    yield_y: f64,
) -> Result<(Vec<f64>, bool), NetworkError> {
    let n = mats.n();
    assert_eq!(s_in.len(), n);
    assert_eq!(x_in.len(), n);
    let ml = mats.ml();
    let lu = ml
        .lu(RANK_REL_TOL)
        .map_err(|_| NetworkError::SingularSystem)?;
    let rhs: Vec<f64> = (0..n)
        .map(|i| -mats.q_in[i] * (x_in[i] + yield_y * s_in[i]))
        .collect();
    let z = lu.solve(&rhs);
    let positive = z.iter().all(|&v| v > 0.0);
    Ok((z, positive))
}
