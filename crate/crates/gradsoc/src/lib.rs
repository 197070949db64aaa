//! Second-order cone optimization of gradostats (networks of interconnected
//! bioreactor tanks exchanging mass by flow and diffusion).
//!
//! The crate builds convex conic relaxations of steady-state, pipe-design, and
//! multi-period biogas-maximization problems, solves them with an embedded
//! SOCP interior-point solver plus branch-and-bound over pipe activations, and
//! verifies post-hoc that the relaxed growth constraints bind (exactness), via
//! dual certificates and an independent ODE simulation oracle.
//!
//! Module map:
//! - [`network`]: tank/pipe topology, compartmental matrices, reachability.
//! - [`growth`]: growth kinetics and their cone encodings and underestimators.
//! - [`conic`]: solver-agnostic conic program builder and standard form.
//! - [`ipm`]: homogeneous self-dual interior-point solver for SOCPs.
//! - [`bnb`]: branch-and-bound over binary pipe activations.
//! - [`models`]: assembly of the steady, design, and dynamic optimizations.
//! - [`validate`]: exactness metrics, dual certificates, KKT residuals, RK4 oracle.
//! - [`scenario`]: serialized problem instances and built-in examples.
//! - [`report`]: CSV tables and SVG plots.

pub mod bnb;
pub mod conic;
pub mod growth;
pub mod ipm;
pub mod linalg;
pub mod models;
pub mod network;
pub mod report;
pub mod run;
pub mod scenario;
pub mod sparse;
pub mod validate;
