//! Verification of DRLP properties on unrolled networks.
//!
//! [`build_query`] lowers a concrete script at depth `k` into a
//! [`ConstraintQuery`] whose satisfying assignments are counterexamples.
//! [`solve`] decides a query completely for ReLU networks by phase
//! branch-and-bound over LP relaxations; [`solve_interval`] is a sound but
//! incomplete fallback. [`bmc`] and [`k_induction`] iterate over depths.

mod bab;
mod bounds;
mod engine;
mod interval;
mod query;

pub use bab::solve;
pub use engine::{bmc, k_induction, solve_auto, verify, Method};
pub use interval::solve_interval;
pub use query::{build_induction_query, build_query, ConstraintQuery};

use crate::drlp::DrlpError;
use crate::formula::DnfTooLarge;
use crate::lp::LpError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default branch-and-bound node budget.
pub const DEFAULT_NODE_BUDGET: u64 = 1_000_000;
/// Environment variable overriding [`DEFAULT_NODE_BUDGET`].
pub const NODE_BUDGET_ENV: &str = "REINVERIFY_NODE_BUDGET";
/// Tolerance used when re-simulating witnesses.
pub const TOL_NET: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Drlp(#[from] DrlpError),
    #[error("script declares {script_n} inputs and {script_m} outputs but the network has {net_n} and {net_m}")]
    Arity {
        script_n: usize,
        script_m: usize,
        net_n: usize,
        net_m: usize,
    },
    #[error(
        "network has tanh activations; the complete solver only handles piecewise-linear networks"
    )]
    NonPiecewiseLinear,
    #[error("property is not inductible: {0}")]
    NotInductible(String),
    #[error("input feature {feature} at step {step} has no finite bound")]
    UnboundedInput { step: usize, feature: usize },
    #[error(transparent)]
    Dnf(#[from] DnfTooLarge),
    #[error("linear program: {0}")]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Proven,
    Falsified,
    Unknown,
}

/// Whether a `Proven` result holds for all depths or only up to `depth`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Guarantee {
    Bounded,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Stats {
    pub nodes: u64,
    pub lp_calls: u64,
    pub wall_ms: u64,
}

impl Stats {
    fn absorb(&mut self, other: Stats) {
        self.nodes += other.nodes;
        self.lp_calls += other.lp_calls;
        self.wall_ms += other.wall_ms;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyResult {
    pub status: Status,
    pub depth: usize,
    pub witness: Option<Witness>,
    pub stats: Stats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guarantee: Option<Guarantee>,
}

impl VerifyResult {
    pub(crate) fn new(status: Status, depth: usize) -> Self {
        Self {
            status,
            depth,
            witness: None,
            stats: Stats::default(),
            guarantee: None,
        }
    }

    pub fn is_proven(&self) -> bool {
        self.status == Status::Proven
    }

    pub fn is_falsified(&self) -> bool {
        self.status == Status::Falsified
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serialises")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub node_budget: u64,
    pub tol_net: f64,
}

impl Default for SolverConfig {
    /// Reads the node budget from `REINVERIFY_NODE_BUDGET` when set.
    fn default() -> Self {
        let node_budget = std::env::var(NODE_BUDGET_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(DEFAULT_NODE_BUDGET);
        Self {
            node_budget,
            tol_net: TOL_NET,
        }
    }
}

impl SolverConfig {
    pub fn with_node_budget(mut self, budget: u64) -> Self {
        self.node_budget = budget;
        self
    }
}
