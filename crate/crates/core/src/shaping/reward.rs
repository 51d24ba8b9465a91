//! Traceback and reward shaping over recorded trajectories.

use super::metric::{diff, PropertyMetric};
use super::{Action, PropertyKind, ShapingConfig, ShapingError, Step};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Gap-scaled step signal.
pub fn lr_coupled_diff(gap: f64, diff: f64, cfg: &ShapingConfig) -> f64 {
    cfg.lr.apply(gap) * diff
}

/// Spread per-step signals backwards over the trajectory. Terms outside the
/// trajectory count as zero.
pub fn traceback(f: &[f64], kind: PropertyKind, lambda: f64, mu: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    let mut carry = 0.0;
    for t in (0..n).rev() {
        let v = match kind {
            PropertyKind::SingleStep => f[t],
            PropertyKind::ActionAvoidance => {
                let prev = if t > 0 { f[t - 1] } else { 0.0 };
                f[t] - prev / lambda + mu * carry
            }
            PropertyKind::DestinationReach => {
                let next = f.get(t + 1).copied().unwrap_or(0.0);
                lambda * next - f[t] + mu * carry
            }
        };
        out[t] = v;
        carry = v;
    }
    out
}

/// A property measured on the current network, with its gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapingProperty {
    pub metric: PropertyMetric,
    pub gap: f64,
}

/// Raw per-step signal of one property, judged by point membership.
pub fn property_signal(prop: &ShapingProperty, steps: &[Step], cfg: &ShapingConfig) -> Vec<f64> {
    steps
        .iter()
        .map(|st| match prop.metric.property.judge(&st.s, &st.a) {
            None => 0.0,
            Some(sat) => lr_coupled_diff(prop.gap, diff(&prop.metric, &st.s, &st.a, sat, cfg), cfg),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapedStep {
    pub s: Vec<f64>,
    pub a: Action,
    pub r: f64,
    /// Traced signal of each property.
    #[serde(rename = "F")]
    pub f: Vec<f64>,
    pub r_shaped: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapedTrajectory {
    pub steps: Vec<ShapedStep>,
}

impl ShapedTrajectory {
    /// Shaping terms `r_shaped - r` per step.
    pub fn bonus(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.r_shaped - s.r).collect()
    }
}

/// Add `beta * sum_i w_i * traced_i` to every reward.
pub fn shape_rewards(
    steps: &[Step],
    props: &[ShapingProperty],
    cfg: &ShapingConfig,
) -> Result<ShapedTrajectory, ShapingError> {
    cfg.validate()?;
    if steps.is_empty() {
        return Err(ShapingError::EmptyTrajectory);
    }
    for (i, p) in props.iter().enumerate() {
        p.metric.property.validate()?;
        if let Some(t) = steps
            .iter()
            .position(|s| s.s.len() != p.metric.property.dim())
        {
            return Err(ShapingError::Dimension(format!(
                "step {t} has {} state features, property {i} expects {}",
                steps[t].s.len(),
                p.metric.property.dim()
            )));
        }
    }
    let lambda = cfg.lambda();
    let traced: Vec<Vec<f64>> = props
        .par_iter()
        .map(|p| {
            traceback(
                &property_signal(p, steps, cfg),
                p.metric.property.kind,
                lambda,
                cfg.mu,
            )
        })
        .collect();
    let steps = steps
        .iter()
        .enumerate()
        .map(|(t, st)| {
            let f: Vec<f64> = traced.iter().map(|tr| tr[t]).collect();
            let combined: f64 = f.iter().enumerate().map(|(i, v)| cfg.weight(i) * v).sum();
            let bonus = cfg.beta * combined;
            ShapedStep {
                s: st.s.clone(),
                a: st.a.clone(),
                r: st.r,
                r_shaped: if bonus == 0.0 { st.r } else { st.r + bonus },
                f,
            }
        })
        .collect();
    Ok(ShapedTrajectory { steps })
}

fn median_abs(v: &[f64]) -> Option<f64> {
    let mut a: Vec<f64> = v
        .iter()
        .map(|x| x.abs())
        .filter(|x| x.is_finite())
        .collect();
    if a.is_empty() {
        return None;
    }
    a.sort_by(f64::total_cmp);
    let n = a.len();
    Some(if n % 2 == 1 {
        a[n / 2]
    } else {
        (a[n / 2 - 1] + a[n / 2]) / 2.0
    })
}

/// Scale that brings the weighted shaping signal to the reward's magnitude:
/// `median|r| / median|combined|`. `None` when either median is zero.
pub fn suggest_beta(rewards: &[f64], combined: &[f64]) -> Option<f64> {
    let r = median_abs(rewards)?;
    let c = median_abs(combined)?;
    (r > 0.0 && c > 0.0).then(|| r / c)
}
