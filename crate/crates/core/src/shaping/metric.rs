//! Densities, exact middles and the distance-based step signal.

use super::{Action, ActionConstraint, ActionDistMode, PropertyBox, ShapingConfig, ShapingError};
use crate::network::{Activation, Network};
use serde::{Deserialize, Serialize};
use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

const DEFAULT_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum DensityMode {
    /// Subdivide the segment at every ReLU kink. Piecewise-linear nets only.
    Exact,
    /// Evaluate `samples` evenly spaced points, endpoints included.
    Sampled { samples: usize },
}

/// Per-feature densities at both bounds of a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityPair {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub epsilon: f64,
    /// Hash of the network the densities were measured on.
    pub snapshot: u64,
}

impl DensityPair {
    pub fn side(&self, side: Side, j: usize) -> f64 {
        match side {
            Side::Lower => self.lower[j],
            Side::Upper => self.upper[j],
        }
    }
}

fn snapshot_id(net: &Network) -> u64 {
    let mut h = DefaultHasher::new();
    net.to_json().hash(&mut h);
    h.finish()
}

/// Start and end of the one-sided segment for feature `j`. The segment
/// starts at the bound and moves `eps` into the box.
fn segment(b: &PropertyBox, j: usize, side: Side, eps: f64) -> (Vec<f64>, Vec<f64>) {
    let mut start = b.state_lower.clone();
    let mut end = b.state_lower.clone();
    match side {
        Side::Lower => end[j] = b.state_lower[j] + eps,
        Side::Upper => {
            start[j] = b.state_upper[j];
            end[j] = b.state_upper[j] - eps;
        }
    }
    (start, end)
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn lerp(a: &[f64], b: &[f64], s: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect()
}

/// Network outputs at every kink of the segment `start -> end`, with the
/// segment parameter of each point. Between consecutive points the output
/// is affine in the parameter.
pub(crate) fn kink_points(net: &Network, start: &[f64], end: &[f64]) -> Vec<(f64, Vec<f64>)> {
    let mut points = vec![(0.0, start.to_vec()), (1.0, end.to_vec())];
    for layer in net.layers() {
        let pre: Vec<(f64, Vec<f64>)> = points.iter().map(|(t, v)| (*t, layer.affine(v))).collect();
        let mut next = Vec::with_capacity(pre.len());
        for w in pre.windows(2) {
            let ((ta, a), (tb, b)) = (&w[0], &w[1]);
            next.push((*ta, a.clone()));
            if layer.activation != Activation::Relu {
                continue;
            }
            let mut cuts: Vec<f64> = a
                .iter()
                .zip(b)
                .filter(|(x, y)| (**x < 0.0 && **y > 0.0) || (**x > 0.0 && **y < 0.0))
                .map(|(x, y)| x / (x - y))
                .collect();
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            for s in cuts {
                next.push((ta + s * (tb - ta), lerp(a, b, s)));
            }
        }
        if let Some(last) = pre.last() {
            next.push(last.clone());
        }
        for (_, v) in &mut next {
            for x in v.iter_mut() {
                *x = layer.activation.apply(*x);
            }
        }
        points = next;
    }
    points
}

/// Largest output distance from the bound point along the one-sided
/// segment, and the segment parameter where it is attained.
pub(crate) fn density_argmax(
    net: &Network,
    b: &PropertyBox,
    j: usize,
    side: Side,
    eps: f64,
    mode: DensityMode,
) -> Result<(f64, f64), ShapingError> {
    if b.dim() != net.input_dim() {
        return Err(ShapingError::Dimension(format!(
            "the box has {} features but the network takes {} inputs",
            b.dim(),
            net.input_dim()
        )));
    }
    if j >= b.dim() {
        return Err(ShapingError::Dimension(format!(
            "feature {j} is out of range"
        )));
    }
    if !(eps > 0.0) {
        return Err(ShapingError::InvalidConfig(
            "epsilon must be positive".into(),
        ));
    }
    let (start, end) = segment(b, j, side, eps);
    let reference = net.forward(&start)?;
    let mut best = (0.0, 0.0);
    let mut consider = |t: f64, y: &[f64]| {
        let d = l2(y, &reference);
        if d > best.0 {
            best = (d, t);
        }
    };
    match mode {
        DensityMode::Exact => {
            if !net.is_piecewise_linear() {
                return Err(ShapingError::InvalidConfig(
                    "exact densities need a piecewise-linear network".into(),
                ));
            }
            for (t, y) in kink_points(net, &start, &end) {
                consider(t, &y);
            }
        }
        DensityMode::Sampled { samples } => {
            let n = samples.max(2);
            for i in 0..n {
                let t = i as f64 / (n - 1) as f64;
                consider(t, &net.forward(&lerp(&start, &end, t))?);
            }
        }
    }
    Ok(best)
}

/// Output fluctuation under an `eps` move from one bound of feature `j`,
/// with all other features at the box's lower corner.
pub fn density(
    net: &Network,
    b: &PropertyBox,
    j: usize,
    side: Side,
    eps: f64,
    mode: DensityMode,
) -> Result<f64, ShapingError> {
    density_argmax(net, b, j, side, eps, mode).map(|(d, _)| d)
}

/// Densities for every feature and side. Exact for piecewise-linear
/// networks, sampled otherwise.
pub fn density_pair(net: &Network, b: &PropertyBox, eps: f64) -> Result<DensityPair, ShapingError> {
    let mode = if net.is_piecewise_linear() {
        DensityMode::Exact
    } else {
        DensityMode::Sampled {
            samples: DEFAULT_SAMPLES,
        }
    };
    densities_with(net, b, eps, mode)
}

/// Densities for every feature and side with an explicit mode.
pub fn densities_with(
    net: &Network,
    b: &PropertyBox,
    eps: f64,
    mode: DensityMode,
) -> Result<DensityPair, ShapingError> {
    let n = b.dim();
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    for j in 0..n {
        lower.push(density(net, b, j, Side::Lower, eps, mode)?);
        upper.push(density(net, b, j, Side::Upper, eps, mode)?);
    }
    Ok(DensityPair {
        lower,
        upper,
        epsilon: eps,
        snapshot: snapshot_id(net),
    })
}

/// The point of feature `j` that counts as deepest inside the box.
pub fn exact_middle(b: &PropertyBox, d: &DensityPair, j: usize) -> f64 {
    let (lo, hi) = (b.state_lower[j], b.state_upper[j]);
    let at_env_lo = lo == b.env_lower[j];
    let at_env_hi = hi == b.env_upper[j];
    if at_env_lo && !at_env_hi {
        return b.env_lower[j];
    }
    if at_env_hi && !at_env_lo {
        return b.env_upper[j];
    }
    let (rl, ru) = (d.lower[j], d.upper[j]);
    if rl + ru > 0.0 {
        (rl * lo + ru * hi) / (rl + ru)
    } else {
        (lo + hi) / 2.0
    }
}

/// Closeness of `v` to the middle of feature `j`, in `[0, 1]`.
pub fn dist_1d(b: &PropertyBox, middle: f64, j: usize, v: f64, p1: f64) -> f64 {
    interval_dist(b.state_lower[j], b.state_upper[j], middle, v, p1)
}

fn interval_dist(lo: f64, hi: f64, middle: f64, v: f64, p1: f64) -> f64 {
    if v < lo || v > hi {
        0.0
    } else if v == middle {
        1.0
    } else if v < middle {
        ((v - lo) / (middle - lo)).powf(p1)
    } else {
        ((hi - v) / (hi - middle)).powf(p1)
    }
}

/// Density-weighted closeness of state `s` to the middles, in `[0, 1]`.
pub fn dist_nd(
    b: &PropertyBox,
    d: &DensityPair,
    middles: &[f64],
    s: &[f64],
    p1: f64,
    p2: f64,
) -> f64 {
    if !b.contains(s) {
        return 0.0;
    }
    let mut num = 0.0;
    let mut den = 0.0;
    let mut plain = 0.0;
    for (j, (&v, &m)) in s.iter().zip(middles).enumerate() {
        let rho = if v < m { d.lower[j] } else { d.upper[j] };
        let dp = dist_1d(b, m, j, v, p1).powf(p2);
        num += rho * dp;
        den += rho;
        plain += dp;
    }
    if den > 0.0 {
        (num / den).powf(1.0 / p2)
    } else {
        (plain / s.len() as f64).powf(1.0 / p2)
    }
}

/// Action factor of the step signal.
fn action_dist(constraint: &ActionConstraint, a: &Action, mode: ActionDistMode, p1: f64) -> f64 {
    match (mode, constraint) {
        (ActionDistMode::Fixed { c }, _) => c,
        (ActionDistMode::Interval1d, ActionConstraint::Interval { lower, upper }) => {
            let v = a.values();
            if v.len() != lower.len() {
                return 0.0;
            }
            v.iter()
                .zip(lower.iter().zip(upper))
                .map(|(&x, (&l, &u))| interval_dist(l, u, (l + u) / 2.0, x, p1))
                .product()
        }
        (ActionDistMode::Interval1d, ActionConstraint::Avoid(_)) => 1.0,
    }
}

/// Box, densities and middles measured on one network snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyMetric {
    pub property: PropertyBox,
    pub densities: DensityPair,
    pub middles: Vec<f64>,
}

impl PropertyMetric {
    pub fn new(net: &Network, property: PropertyBox, eps: f64) -> Result<Self, ShapingError> {
        property.validate()?;
        let densities = density_pair(net, &property, eps)?;
        Ok(Self::from_parts(property, densities))
    }

    pub fn from_parts(property: PropertyBox, densities: DensityPair) -> Self {
        let middles = (0..property.dim())
            .map(|j| exact_middle(&property, &densities, j))
            .collect();
        Self {
            property,
            densities,
            middles,
        }
    }

    pub fn dist(&self, s: &[f64], p1: f64, p2: f64) -> f64 {
        dist_nd(&self.property, &self.densities, &self.middles, s, p1, p2)
    }
}

/// Signed step signal: negative on violation, positive on satisfaction.
pub fn diff(
    metric: &PropertyMetric,
    s: &[f64],
    a: &Action,
    satisfied: bool,
    cfg: &ShapingConfig,
) -> f64 {
    let magnitude = metric.dist(s, cfg.p1, cfg.p2)
        * action_dist(&metric.property.action, a, cfg.action_dist, cfg.p1);
    if satisfied {
        magnitude
    } else {
        -magnitude
    }
}
