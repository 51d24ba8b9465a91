//! Exact dynamic programming on small finite MDPs.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum MdpError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("transition row for state {state}, action {action} sums to {sum}")]
    NotStochastic {
        state: usize,
        action: usize,
        sum: f64,
    },
    #[error("discount must lie in [0, 1), got {0}")]
    Discount(f64),
}

/// `p[s][a][s2]` and `r[s][a][s2]` for every transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteMdp {
    pub p: Vec<Vec<Vec<f64>>>,
    pub r: Vec<Vec<Vec<f64>>>,
    pub gamma: f64,
}

impl FiniteMdp {
    pub fn new(p: Vec<Vec<Vec<f64>>>, r: Vec<Vec<Vec<f64>>>, gamma: f64) -> Result<Self, MdpError> {
        let m = Self { p, r, gamma };
        m.validate()?;
        Ok(m)
    }

    pub fn n_states(&self) -> usize {
        self.p.len()
    }

    pub fn n_actions(&self) -> usize {
        self.p.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<(), MdpError> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(MdpError::Discount(self.gamma));
        }
        let (ns, na) = (self.n_states(), self.n_actions());
        if ns == 0 || na == 0 {
            return Err(MdpError::Shape("no states or no actions".into()));
        }
        if self.r.len() != ns {
            return Err(MdpError::Shape(
                "reward and transition tensors differ in size".into(),
            ));
        }
        for s in 0..ns {
            if self.p[s].len() != na || self.r[s].len() != na {
                return Err(MdpError::Shape(format!(
                    "state {s} has the wrong action count"
                )));
            }
            for a in 0..na {
                if self.p[s][a].len() != ns || self.r[s][a].len() != ns {
                    return Err(MdpError::Shape(format!(
                        "row ({s}, {a}) has the wrong length"
                    )));
                }
                let sum: f64 = self.p[s][a].iter().sum();
                if (sum - 1.0).abs() > STOCHASTIC_TOL || self.p[s][a].iter().any(|&x| x < 0.0) {
                    return Err(MdpError::NotStochastic {
                        state: s,
                        action: a,
                        sum,
                    });
                }
            }
        }
        Ok(())
    }

    fn backup(&self, q: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let v: Vec<f64> = q
            .iter()
            .map(|row| row.iter().copied().fold(f64::MIN, f64::max))
            .collect();
        (0..self.n_states())
            .map(|s| {
                (0..self.n_actions())
                    .map(|a| {
                        self.p[s][a]
                            .iter()
                            .zip(&self.r[s][a])
                            .zip(&v)
                            .map(|((p, r), v2)| p * (r + self.gamma * v2))
                            .sum()
                    })
                    .collect()
            })
            .collect()
    }
}

/// Optimal action values, accurate to `tol` in the sup norm.
pub fn value_iteration(mdp: &FiniteMdp, tol: f64) -> Vec<Vec<f64>> {
    let threshold = if mdp.gamma > 0.0 {
        tol * (1.0 - mdp.gamma) / mdp.gamma
    } else {
        f64::INFINITY
    };
    let mut q = vec![vec![0.0; mdp.n_actions()]; mdp.n_states()];
    loop {
        let next = mdp.backup(&q);
        let change = next
            .iter()
            .flatten()
            .zip(q.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        q = next;
        if change < threshold {
            return q;
        }
    }
}

/// The MDP with rewards `r + gamma * psi(s2) - psi(s)`.
pub fn shape_mdp(mdp: &FiniteMdp, psi: &[f64]) -> Result<FiniteMdp, MdpError> {
    if psi.len() != mdp.n_states() {
        return Err(MdpError::Shape(format!(
            "potential has {} entries for {} states",
            psi.len(),
            mdp.n_states()
        )));
    }
    let mut out = mdp.clone();
    for (s, rows) in out.r.iter_mut().enumerate() {
        for row in rows {
            for (s2, r) in row.iter_mut().enumerate() {
                *r += mdp.gamma * psi[s2] - psi[s];
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Greedy {
    Action(usize),
    /// The two best actions are closer than the margin.
    AmbiguousTie,
}

pub fn greedy_policy(q: &[Vec<f64>], margin: f64) -> Vec<Greedy> {
    q.iter()
        .map(|row| {
            let mut best = 0;
            for (a, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = a;
                }
            }
            let tie = row
                .iter()
                .enumerate()
                .any(|(a, v)| a != best && row[best] - v < margin);
            if tie {
                Greedy::AmbiguousTie
            } else {
                Greedy::Action(best)
            }
        })
        .collect()
}

/// Transition rows drawn from a flat Dirichlet, rewards uniform in [-1, 1].
pub fn random_mdp(rng: &mut impl Rng, n_states: usize, n_actions: usize, gamma: f64) -> FiniteMdp {
    let mut p = Vec::with_capacity(n_states);
    let mut r = Vec::with_capacity(n_states);
    for _ in 0..n_states {
        let mut ps = Vec::with_capacity(n_actions);
        let mut rs = Vec::with_capacity(n_actions);
        for _ in 0..n_actions {
            let raw: Vec<f64> = (0..n_states).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            let total: f64 = raw.iter().sum();
            ps.push(raw.iter().map(|x| x / total).collect());
            rs.push(
                (0..n_states)
                    .map(|_| rng.random_range(-1.0..=1.0))
                    .collect(),
            );
        }
        p.push(ps);
        r.push(rs);
    }
    FiniteMdp { p, r, gamma }
}
