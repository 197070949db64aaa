//! Serialized problem instances: a versioned JSON document bundling the
//! network, growth parameters, model choice, operational constraints, and
//! solver options, plus generators for the built-in example instances.

use serde::{Deserialize, Serialize};

use crate::growth::{GrowthKind, GrowthParams};
use crate::models::{DynamicSpec, ModelKind, ModelSpec, OmegaSpec};
use crate::network::{GradostatNetwork, Pipe, Tank};

pub const SCHEMA_VERSION: u32 = 1;

/// One additive term of a per-tank inflow signal, evaluated at period t
/// (1-based) out of tau.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalTerm {
    Const {
        value: f64,
    },
    /// amplitude * sin(2 pi cycles t / tau)
    Sin {
        amplitude: f64,
        cycles: f64,
    },
    /// amplitude * cos(2 pi cycles t / tau)
    Cos {
        amplitude: f64,
        cycles: f64,
    },
    /// `value` on the window start_frac * tau < t <= end_frac * tau
    Step {
        value: f64,
        start_frac: f64,
        end_frac: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Signal {
    pub terms: Vec<SignalTerm>,
}

impl Signal {
    pub fn constant(v: f64) -> Self {
        Signal {
            terms: vec![SignalTerm::Const { value: v }],
        }
    }

    pub fn zero() -> Self {
        Signal { terms: vec![] }
    }

    pub fn eval(&self, t: usize, tau: usize) -> f64 {
        let tf = t as f64;
        let tauf = tau as f64;
        self.terms
            .iter()
            .map(|term| match *term {
                SignalTerm::Const { value } => value,
                SignalTerm::Sin { amplitude, cycles } => {
                    amplitude * (2.0 * std::f64::consts::PI * cycles * tf / tauf).sin()
                }
                SignalTerm::Cos { amplitude, cycles } => {
                    amplitude * (2.0 * std::f64::consts::PI * cycles * tf / tauf).cos()
                }
                SignalTerm::Step {
                    value,
                    start_frac,
                    end_frac,
                } => {
                    if tf > start_frac * tauf && tf <= end_frac * tauf {
                        value
                    } else {
                        0.0
                    }
                }
            })
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    #[serde(default = "default_eps")]
    pub eps_feas: f64,
    #[serde(default = "default_eps")]
    pub eps_gap: f64,
    #[serde(default = "default_iters")]
    pub max_iterations: usize,
}

fn default_eps() -> f64 {
    1e-8
}

fn default_iters() -> usize {
    200
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            eps_feas: 1e-8,
            eps_gap: 1e-8,
            max_iterations: 200,
        }
    }
}

impl SolverOptions {
    pub fn to_settings(&self) -> crate::ipm::SolveSettings {
        crate::ipm::SolveSettings {
            max_iterations: self.max_iterations,
            eps_feas: self.eps_feas,
            eps_gap: self.eps_gap,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BnbOptions {
    #[serde(default = "default_rel_gap")]
    pub rel_gap: f64,
    #[serde(default = "default_abs_gap")]
    pub abs_gap: f64,
    #[serde(default = "default_node_limit")]
    pub node_limit: usize,
    #[serde(default = "default_true")]
    pub deterministic: bool,
}

fn default_rel_gap() -> f64 {
    1e-6
}

fn default_abs_gap() -> f64 {
    1e-9
}

fn default_node_limit() -> usize {
    1_000_000
}

fn default_true() -> bool {
    true
}

impl Default for BnbOptions {
    fn default() -> Self {
        BnbOptions {
            rel_gap: 1e-6,
            abs_gap: 1e-9,
            node_limit: 1_000_000,
            deterministic: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub network: GradostatNetwork,
    pub model: ModelSpec,
    #[serde(default)]
    pub omega: OmegaSpec,
    /// Present for multi-period runs.
    #[serde(default)]
    pub dynamic: Option<DynamicSpec>,
    /// Whether candidate activations are design decisions (MISOCP).
    #[serde(default)]
    pub design: bool,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub bnb: BnbOptions,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("unknown example `{0}`")]
    UnknownExample(String),
    #[error("scenario schema version {got} unsupported (expected {want})")]
    BadSchemaVersion { got: u32, want: u32 },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("json: {0}")]
    Json(String),
}

impl Scenario {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn from_json(text: &str) -> Result<Scenario, ScenarioError> {
        let sc: Scenario =
            serde_json::from_str(text).map_err(|e| ScenarioError::Json(e.to_string()))?;
        if sc.schema_version != SCHEMA_VERSION {
            return Err(ScenarioError::BadSchemaVersion {
                got: sc.schema_version,
                want: SCHEMA_VERSION,
            });
        }
        sc.network
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        if let Some(d) = &sc.dynamic {
            if d.s_in_signal.len() != sc.network.n_tanks() {
                return Err(ScenarioError::Invalid(
                    "dynamic spec needs one s_in signal per tank".into(),
                ));
            }
        }
        Ok(sc)
    }

    /// Aligns the growth-law kind with the requested model, defaulting the
    /// constant biomass to the inflow concentrations.
    pub fn with_model(mut self, kind: ModelKind) -> Scenario {
        self.model.kind = kind;
        self.network.growth.kind = match kind {
            ModelKind::Rc => GrowthKind::Contois,
            ModelKind::Rme => GrowthKind::Monod,
            ModelKind::Rmx => {
                let xc = match &self.network.growth.kind {
                    GrowthKind::MonodConstantBiomass { x_c_kg_per_m3 } => x_c_kg_per_m3.clone(),
                    _ => self.network.x_in(),
                };
                GrowthKind::MonodConstantBiomass { x_c_kg_per_m3: xc }
            }
        };
        self
    }
}

fn unit_growth() -> GrowthParams {
    GrowthParams {
        mu_max_per_h: 1.0,
        k: 1.0,
        y: 1.0,
        kind: GrowthKind::Contois,
    }
}

fn candidate_pipe(from: usize, to: usize) -> Pipe {
    Pipe {
        from,
        to,
        q0_m3_per_h: 0.0,
        q1_m3_per_h: 1.0,
        d0_m3_per_h: 0.0,
        d1_m3_per_h: 0.3,
        cost: 1.0,
        candidate: true,
    }
}

/// The four-tank design instance: no base network, every ordered pair a
/// candidate pipe (12 binaries), budget 4.
pub fn four_tank() -> Scenario {
    let volumes = [1.0, 2.0, 3.0, 4.0];
    let q_out = [2.0, 1.0, 3.0, 2.0];
    let s_in = [1.0, 3.0, 1.0, 2.0];
    let x_in = [4.0, 3.0, 2.0, 1.0];
    let tanks: Vec<Tank> = (0..4)
        .map(|i| Tank {
            volume_m3: volumes[i],
            q_out_m3_per_h: q_out[i],
            q_in_m3_per_h: None,
            s_in_kg_per_m3: s_in[i],
            x_in_kg_per_m3: x_in[i],
        })
        .collect();
    let mut pipes = Vec::new();
    for i in 0..4 {
        for j in 0..4 {
            if i != j {
                pipes.push(candidate_pipe(i, j));
            }
        }
    }
    Scenario {
        schema_version: SCHEMA_VERSION,
        name: "four_tank".into(),
        network: GradostatNetwork {
            tanks,
            pipes,
            growth: unit_growth(),
        },
        model: ModelSpec {
            kind: ModelKind::Rc,
            with_underestimators: true,
            gamma: Some(50.0),
            objective_tanks: None,
        },
        omega: OmegaSpec {
            budget: Some(4.0),
            ..Default::default()
        },
        dynamic: None,
        design: true,
        solver: SolverOptions::default(),
        bnb: BnbOptions::default(),
    }
}

/// Four-tank instance with the first tank dropped from the objective.
pub fn four_tank_modified() -> Scenario {
    let mut sc = four_tank();
    sc.name = "four_tank_modified".into();
    sc.model.objective_tanks = Some(vec![1, 2, 3]);
    sc
}

/// Hub-and-rim design instance with n tanks: candidate pipes both ways
/// between the hub and each rim tank and along the rim ring, 4(n-1)
/// binaries, budget 1.5 n.
pub fn wheel(n: usize, hard: bool) -> Scenario {
    assert!(n >= 3, "wheel needs at least 3 tanks");
    let tanks: Vec<Tank> = (1..=n)
        .map(|i| Tank {
            volume_m3: if hard { 1.0 + (i % 6) as f64 } else { i as f64 },
            q_out_m3_per_h: if hard { 1.0 + (i % 7) as f64 } else { 1.0 },
            q_in_m3_per_h: None,
            s_in_kg_per_m3: i as f64,
            x_in_kg_per_m3: (n - i + 1) as f64,
        })
        .collect();
    let mut pipes = Vec::new();
    for i in 1..n {
        pipes.push(candidate_pipe(0, i));
        pipes.push(candidate_pipe(i, 0));
    }
    for i in 1..n - 1 {
        pipes.push(candidate_pipe(i, i + 1));
        pipes.push(candidate_pipe(i + 1, i));
    }
    pipes.push(candidate_pipe(1, n - 1));
    pipes.push(candidate_pipe(n - 1, 1));
    Scenario {
        schema_version: SCHEMA_VERSION,
        name: format!("wheel_{n}_{}", if hard { "hard" } else { "easy" }),
        network: GradostatNetwork {
            tanks,
            pipes,
            growth: unit_growth(),
        },
        model: ModelSpec {
            kind: ModelKind::Rc,
            with_underestimators: true,
            gamma: Some(50.0),
            objective_tanks: None,
        },
        omega: OmegaSpec {
            budget: Some(1.5 * n as f64),
            ..Default::default()
        },
        dynamic: None,
        design: true,
        solver: SolverOptions::default(),
        bnb: BnbOptions::default(),
    }
}

/// Multi-period four-tank instance: fixed chain-with-recycle topology,
/// sinusoid/step inflow substrate signals, per-period biomass inflow
/// decisions capped in total mass, periodic boundary.
pub fn dynamic_four_tank() -> Scenario {
    let q_out = [1.0, 1.0, 2.0, 1.0];
    let q_in = [2.0, 1.0, 1.0, 1.0];
    let tanks: Vec<Tank> = (0..4)
        .map(|i| Tank {
            volume_m3: 1.0,
            q_out_m3_per_h: q_out[i],
            q_in_m3_per_h: Some(q_in[i]),
            s_in_kg_per_m3: 0.0,
            x_in_kg_per_m3: 0.0,
        })
        .collect();
    let fixed = |from: usize, to: usize, q: f64| Pipe {
        from,
        to,
        q0_m3_per_h: q,
        q1_m3_per_h: 0.0,
        d0_m3_per_h: 0.3 * q,
        d1_m3_per_h: 0.0,
        cost: 0.0,
        candidate: false,
    };
    let pipes = vec![
        fixed(0, 1, 1.0),
        fixed(1, 2, 2.0),
        fixed(2, 3, 1.0),
        fixed(3, 1, 1.0),
    ];
    let signals = vec![
        Signal {
            terms: vec![
                SignalTerm::Const { value: 1.0 },
                SignalTerm::Sin {
                    amplitude: 1.0,
                    cycles: 2.0,
                },
            ],
        },
        Signal::zero(),
        Signal {
            terms: vec![SignalTerm::Step {
                value: 0.5,
                start_frac: 0.25,
                end_frac: 0.75,
            }],
        },
        Signal {
            terms: vec![
                SignalTerm::Const { value: 1.0 },
                SignalTerm::Cos {
                    amplitude: 1.0,
                    cycles: 2.0,
                },
            ],
        },
    ];
    Scenario {
        schema_version: SCHEMA_VERSION,
        name: "dynamic_four_tank".into(),
        network: GradostatNetwork {
            tanks,
            pipes,
            growth: unit_growth(),
        },
        model: ModelSpec {
            kind: ModelKind::Rc,
            with_underestimators: false,
            gamma: None,
            objective_tanks: None,
        },
        omega: OmegaSpec {
            biomass_inflow_cap: Some(3.0),
            ..Default::default()
        },
        dynamic: Some(DynamicSpec {
            periods: 1000,
            dt_h: 1.0,
            discount: 1.0,
            s_in_signal: signals,
            x_in_decision: true,
            boundary: crate::models::Boundary::Periodic,
            initial_s: None,
            initial_x: None,
            cap_on_state: false,
        }),
        design: false,
        solver: SolverOptions::default(),
        bnb: BnbOptions::default(),
    }
}

/// Looks up a built-in example by name: `four_tank`, `four_tank_modified`,
/// `dynamic_four_tank`, or `wheel:<n>:<easy|hard>`.
pub fn generate_example(name: &str) -> Result<Scenario, ScenarioError> {
    match name {
        "four_tank" => Ok(four_tank()),
        "four_tank_modified" => Ok(four_tank_modified()),
        "dynamic_four_tank" => Ok(dynamic_four_tank()),
        other => {
            if let Some(rest) = other.strip_prefix("wheel:") {
                let mut parts = rest.split(':');
                let n: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| ScenarioError::UnknownExample(other.into()))?;
                let hard = match parts.next() {
                    Some("hard") => true,
                    Some("easy") | None => false,
                    _ => return Err(ScenarioError::UnknownExample(other.into())),
                };
                if n < 3 {
                    return Err(ScenarioError::UnknownExample(other.into()));
                }
                Ok(wheel(n, hard))
            } else {
                Err(ScenarioError::UnknownExample(other.into()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_tank_has_twelve_binaries_and_budget_four() {
        let sc = four_tank();
        assert_eq!(sc.network.candidate_pipes().len(), 12);
        assert_eq!(sc.omega.budget, Some(4.0));
        sc.network.validate().unwrap();
    }

    #[test]
    fn wheel_binary_count_is_4n_minus_4() {
        for n in [5, 7, 11] {
            let sc = wheel(n, true);
            assert_eq!(sc.network.candidate_pipes().len(), 4 * (n - 1));
            assert_eq!(sc.omega.budget, Some(1.5 * n as f64));
            sc.network.validate().unwrap();
        }
    }

    #[test]
    fn dynamic_four_tank_signals_match_shapes() {
        let sc = dynamic_four_tank();
        let d = sc.dynamic.as_ref().unwrap();
        assert_eq!(d.periods, 1000);
        let tau = d.periods;
        // tank 1 signal: 1 + sin(4 pi t / tau)
        let t = 125; // tau/8 -> sin(pi/2) = 1
        assert!((d.s_in_signal[0].eval(t, tau) - 2.0).abs() < 1e-12);
        assert_eq!(d.s_in_signal[1].eval(t, tau), 0.0);
        // step window (tau/4, 3 tau/4]
        assert_eq!(d.s_in_signal[2].eval(250, tau), 0.0);
        assert_eq!(d.s_in_signal[2].eval(251, tau), 0.5);
        assert_eq!(d.s_in_signal[2].eval(750, tau), 0.5);
        assert_eq!(d.s_in_signal[2].eval(751, tau), 0.0);
        // tank 4: 1 + cos(4 pi t / tau)
        assert!((d.s_in_signal[3].eval(500, tau) - 2.0).abs() < 1e-12);
        sc.network.validate().unwrap();
    }

    #[test]
    fn scenario_roundtrips_through_json() {
        for sc in [
            four_tank(),
            four_tank_modified(),
            wheel(5, true),
            dynamic_four_tank(),
        ] {
            let text = sc.to_json();
            let back = Scenario::from_json(&text).unwrap();
            assert_eq!(sc, back);
        }
    }

    #[test]
    fn unknown_example_rejected() {
        assert!(matches!(
            generate_example("nope"),
            Err(ScenarioError::UnknownExample(_))
        ));
    }
}
