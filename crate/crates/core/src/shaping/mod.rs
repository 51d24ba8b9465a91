//! Property metric and reward shaping.
//!
//! A property is described by a [`PropertyBox`]: the state region it talks
//! about, the action set it forbids there and the environment's own state
//! bounds. The metric turns each step of a trajectory into a signed signal
//! ([`diff`]), scales it by how far the network is from satisfying the
//! property ([`gap`]), spreads it backwards over the trajectory
//! ([`traceback`]) and adds the weighted sum to the environment reward
//! ([`shape_rewards`]).

mod gap;
mod metric;
mod reward;

pub use gap::{gap, Gap, GapSpec, RelaxDirection};
pub use metric::{
    densities_with, density, density_pair, diff, dist_1d, dist_nd, exact_middle, DensityMode,
    DensityPair, PropertyMetric, Side,
};
pub use reward::{
    lr_coupled_diff, property_signal, shape_rewards, suggest_beta, traceback, ShapedStep,
    ShapedTrajectory, ShapingProperty,
};

use crate::breakpoint::SearchError;
use crate::drlp::DrlpError;
use crate::network::NetworkError;
use crate::verify::VerifyError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ShapingError {
    #[error("invalid property box: {0}")]
    InvalidBox(String),
    #[error("invalid shaping config: {0}")]
    InvalidConfig(String),
    #[error("the trajectory is empty")]
    EmptyTrajectory,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("no breakpoint within distance {cap} of the stated parameter")]
    SearchExhausted { cap: f64 },
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Drlp(#[from] DrlpError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// How the per-step signal propagates backwards over a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropertyKind {
    /// Multi-step safety: the forbidden action is taken inside the region.
    #[default]
    ActionAvoidance,
    /// Multi-step liveness: the trajectory should reach or leave a region.
    DestinationReach,
    /// No traceback; the traced signal equals the raw one.
    SingleStep,
}

/// Actions the property forbids while the state is inside the box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionConstraint {
    /// Forbidden continuous box, one interval per action dimension.
    Interval { lower: Vec<f64>, upper: Vec<f64> },
    /// Forbidden discrete action ids.
    Avoid(Vec<usize>),
}

/// An action as recorded in a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    fn values(&self) -> Vec<f64> {
        match self {
            Action::Discrete(a) => vec![*a as f64],
            Action::Continuous(v) => v.clone(),
        }
    }
}

impl ActionConstraint {
    /// Whether `action` lies in the forbidden set.
    pub fn forbids(&self, action: &Action) -> bool {
        match (self, action) {
            (ActionConstraint::Avoid(ids), Action::Discrete(a)) => ids.contains(a),
            (ActionConstraint::Avoid(ids), Action::Continuous(v)) => {
                v.len() == 1 && ids.iter().any(|&i| i as f64 == v[0])
            }
            (ActionConstraint::Interval { lower, upper }, a) => {
                let v = a.values();
                v.len() == lower.len()
                    && v.iter()
                        .zip(lower.iter().zip(upper))
                        .all(|(x, (l, u))| l <= x && x <= u)
            }
        }
    }
}

/// State region of a property together with the environment bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyBox {
    pub state_lower: Vec<f64>,
    pub state_upper: Vec<f64>,
    pub action: ActionConstraint,
    pub env_lower: Vec<f64>,
    pub env_upper: Vec<f64>,
    #[serde(default)]
    pub kind: PropertyKind,
}

impl PropertyBox {
    pub fn new(
        state_lower: Vec<f64>,
        state_upper: Vec<f64>,
        action: ActionConstraint,
        env_lower: Vec<f64>,
        env_upper: Vec<f64>,
        kind: PropertyKind,
    ) -> Result<Self, ShapingError> {
        let b = Self {
            state_lower,
            state_upper,
            action,
            env_lower,
            env_upper,
            kind,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn dim(&self) -> usize {
        self.state_lower.len()
    }

    pub fn validate(&self) -> Result<(), ShapingError> {
        let n = self.dim();
        if n == 0 {
            return Err(ShapingError::InvalidBox("the box has no features".into()));
        }
        for (name, v) in [
            ("state_upper", &self.state_upper),
            ("env_lower", &self.env_lower),
            ("env_upper", &self.env_upper),
        ] {
            if v.len() != n {
                return Err(ShapingError::InvalidBox(format!(
                    "{name} has {} entries, state_lower has {n}",
                    v.len()
                )));
            }
        }
        for j in 0..n {
            let (lo, hi) = (self.state_lower[j], self.state_upper[j]);
            let (el, eu) = (self.env_lower[j], self.env_upper[j]);
            if !(lo <= hi) {
                return Err(ShapingError::InvalidBox(format!(
                    "feature {j}: lower {lo} > upper {hi}"
                )));
            }
            if !(el <= lo && hi <= eu) {
                return Err(ShapingError::InvalidBox(format!(
                    "feature {j}: [{lo}, {hi}] is not inside the environment range [{el}, {eu}]"
                )));
            }
        }
        if let ActionConstraint::Interval { lower, upper } = &self.action {
            if lower.len() != upper.len() || lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
                return Err(ShapingError::InvalidBox("malformed action interval".into()));
            }
        }
        Ok(())
    }

    pub fn contains(&self, s: &[f64]) -> bool {
        s.len() == self.dim()
            && s.iter()
                .zip(self.state_lower.iter().zip(&self.state_upper))
                .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }

    /// Point membership test: `Some(false)` when the step violates the
    /// property, `Some(true)` when it satisfies it, `None` outside the box.
    pub fn judge(&self, s: &[f64], a: &Action) -> Option<bool> {
        self.contains(s).then(|| !self.action.forbids(a))
    }
}

/// Learning-rate schedule applied to the gap.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LrSchedule {
    /// `1 / (1 + e^-g)`.
    #[default]
    Sigmoid,
    Constant {
        value: f64,
    },
}

impl LrSchedule {
    pub fn apply(self, g: f64) -> f64 {
        match self {
            LrSchedule::Sigmoid => 1.0 / (1.0 + (-g).exp()),
            LrSchedule::Constant { value } => value,
        }
    }
}

/// How the action factor of [`diff`] is measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ActionDistMode {
    Fixed {
        c: f64,
    },
    /// 1-D distance inside the forbidden interval, centred at its midpoint.
    Interval1d,
}

impl Default for ActionDistMode {
    fn default() -> Self {
        ActionDistMode::Fixed { c: 1.0 }
    }
}

fn default_p1() -> f64 {
    1.0
}

fn default_p2() -> f64 {
    2.0
}

fn default_gamma() -> f64 {
    0.99
}

fn default_one() -> f64 {
    1.0
}

fn default_epsilon() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapingConfig {
    #[serde(default = "default_p1")]
    pub p1: f64,
    #[serde(default = "default_p2")]
    pub p2: f64,
    /// MDP discount.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Traceback discount; falls back to `gamma`.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Traceback decay.
    #[serde(default)]
    pub mu: f64,
    #[serde(default = "default_one")]
    pub beta: f64,
    /// Per-property weights; missing entries count as 1.
    #[serde(default)]
    pub weights: Vec<f64>,
    #[serde(default)]
    pub lr: LrSchedule,
    #[serde(default)]
    pub action_dist: ActionDistMode,
    /// Perturbation width for densities.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

impl Default for ShapingConfig {
    fn default() -> Self {
        Self {
            p1: 1.0,
            p2: 2.0,
            gamma: default_gamma(),
            lambda: None,
            mu: 0.0,
            beta: 1.0,
            weights: Vec::new(),
            lr: LrSchedule::Sigmoid,
            action_dist: ActionDistMode::default(),
            epsilon: default_epsilon(),
        }
    }
}

impl ShapingConfig {
    pub fn lambda(&self) -> f64 {
        self.lambda.unwrap_or(self.gamma)
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights.get(i).copied().unwrap_or(1.0)
    }

    pub fn validate(&self) -> Result<(), ShapingError> {
        let bad = |m: String| Err(ShapingError::InvalidConfig(m));
        if !(self.p1 > 0.0) || !(self.p2 > 0.0) {
            return bad("p1 and p2 must be positive".into());
        }
        let lambda = self.lambda();
        if !(lambda > 0.0 && lambda <= 1.0) {
            return bad(format!("lambda must lie in (0, 1], got {lambda}"));
        }
        if !(0.0..1.0).contains(&self.mu) {
            return bad(format!("mu must lie in [0, 1), got {}", self.mu));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if let Some(w) = self.weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return bad(format!("weights must lie in [0, 1], got {w}"));
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive".into());
        }
        if !self.beta.is_finite() {
            return bad("beta must be finite".into());
        }
        Ok(())
    }
}

/// One recorded step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub s: Vec<f64>,
    pub a: Action,
    pub r: f64,
}

pub type Trajectory = Vec<Step>;
