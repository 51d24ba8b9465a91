//! Complete ReLU branch-and-bound.
//!
//! Each node fixes some ReLU phases (and, for large disjunctions, some Or-group
//! choices). The node is tightened with [`bounds::tighten`], then an LP over
//! the inputs, outputs and the post-activation values of unstable neurons is
//! solved with the triangle relaxation. The LP minimises the largest atom
//! violation `t`; `t > 0` prunes the node. Otherwise the LP inputs are
//! simulated through the network and checked against `P ∧ ¬Q`. Failing that,
//! the node is split on a violated Or-group or on the widest unstable neuron.

use super::bounds::{tighten, Bounds, NeuronLayout, ACTIVE, FREE, INACTIVE};
use super::{ConstraintQuery, SolverConfig, Stats, Status, VerifyError, VerifyResult, Witness};
use crate::formula::{Atom, Compiled, Conjunction};
use crate::lp::{LinearProgram, LpOutcome, Sense};
use crate::network::Activation;
use std::collections::BTreeSet;
use std::time::Instant;

/// Full case enumeration limit for Or-groups.
pub(crate) const EAGER_CASE_LIMIT: usize = 4096;
/// Largest violation `t` still treated as satisfiable.
const T_EPS: f64 = 1e-10;
/// Check tolerance for LP points at non-leaf nodes.
const INNER_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
struct Node {
    phases: Vec<i8>,
    choices: Vec<Option<usize>>,
}

/// Affine expression over LP columns.
#[derive(Debug, Clone)]
struct Lin {
    coef: Vec<f64>,
    c: f64,
}

impl Lin {
    fn zero(n: usize) -> Self {
        Lin {
            coef: vec![0.0; n],
            c: 0.0,
        }
    }

    fn var(n: usize, v: usize) -> Self {
        let mut l = Lin::zero(n);
        l.coef[v] = 1.0;
        l
    }

    fn axpy(&mut self, a: f64, other: &Lin) {
        if a == 0.0 {
            return;
        }
        for (x, y) in self.coef.iter_mut().zip(&other.coef) {
            *x += a * y;
        }
        self.c += a * other.c;
    }

    fn sparse(&self) -> Vec<(usize, f64)> {
        self.coef
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, c)| (i, *c))
            .collect()
    }
}

struct Solver<'a> {
    query: &'a ConstraintQuery,
    combined: Compiled,
    layout: NeuronLayout,
    cfg: &'a SolverConfig,
    stats: Stats,
    numerical_trouble: bool,
}

/// Decide a query on a piecewise-linear network.
pub fn solve(query: &ConstraintQuery, cfg: &SolverConfig) -> Result<VerifyResult, VerifyError> {
    let start = Instant::now();
    let net = query.unrolled.base();
    if !net.is_piecewise_linear() {
        return Err(VerifyError::NonPiecewiseLinear);
    }
    let combined = query.combined();
    let block = query.unrolled.block();
    let mut steps = BTreeSet::new();
    for a in combined
        .linear
        .iter()
        .chain(combined.groups.iter().flatten().flatten())
    {
        steps.extend(a.vars().map(|v| v / block));
    }
    let layout = NeuronLayout::new(&query.unrolled, steps.into_iter().collect());
    let mut solver = Solver {
        query,
        combined,
        layout,
        cfg,
        stats: Stats::default(),
        numerical_trouble: false,
    };
    let mut result = solver.run()?;
    result.stats = solver.stats;
    result.stats.wall_ms = start.elapsed().as_millis() as u64;
    Ok(result)
}

impl Solver<'_> {
    fn run(&mut self) -> Result<VerifyResult, VerifyError> {
        let depth = self.query.depth();
        if self.combined.trivially_false() {
            return Ok(VerifyResult::new(Status::Proven, depth));
        }
        let sizes: Vec<usize> = self.combined.groups.iter().map(Vec::len).collect();
        let cases = sizes.iter().try_fold(1usize, |acc, s| {
            acc.checked_mul(*s).filter(|v| *v <= EAGER_CASE_LIMIT)
        });
        let n_neurons = self.layout.len();
        let mut roots = Vec::new();
        match cases {
            Some(total) => {
                for mut flat in 0..total {
                    let mut choices = vec![None; sizes.len()];
                    for (slot, size) in choices.iter_mut().zip(&sizes).rev() {
                        *slot = Some(flat % size);
                        flat /= size;
                    }
                    roots.push(Node {
                        phases: vec![FREE; n_neurons],
                        choices,
                    });
                }
            }
            None => roots.push(Node {
                phases: vec![FREE; n_neurons],
                choices: vec![None; sizes.len()],
            }),
        }
        tracing::debug!(roots = roots.len(), neurons = n_neurons, "branch and bound");
        let mut stack: Vec<Node> = roots.into_iter().rev().collect();
        while let Some(node) = stack.pop() {
            if self.stats.nodes >= self.cfg.node_budget {
                tracing::warn!(budget = self.cfg.node_budget, "node budget exhausted");
                return Ok(VerifyResult::new(Status::Unknown, depth));
            }
            self.stats.nodes += 1;
            match self.process(&node)? {
                Outcome::Pruned => {}
                Outcome::Found(flat) => {
                    let (x, y) = self.query.unrolled.split(&flat);
                    let mut r = VerifyResult::new(Status::Falsified, depth);
                    r.witness = Some(Witness { x, y });
                    return Ok(r);
                }
                Outcome::Split(children) => stack.extend(children.into_iter().rev()),
            }
        }
        let status = if self.numerical_trouble {
            Status::Unknown
        } else {
            Status::Proven
        };
        Ok(VerifyResult::new(status, depth))
    }

    fn process(&mut self, node: &Node) -> Result<Outcome, VerifyError> {
        let atoms = node_atoms(&self.combined, node);
        let n_flat = self.query.unrolled.num_vars();
        let inf = f64::INFINITY;
        let Some(bounds) = tighten(
            &atoms,
            &self.query.unrolled,
            &self.layout,
            &node.phases,
            vec![-inf; n_flat],
            vec![inf; n_flat],
        ) else {
            return Ok(Outcome::Pruned);
        };
        let unstable = self.unstable(node, &bounds);
        self.stats.lp_calls += 1;
        let Some(point) = self.relaxation(node, &atoms, &bounds, &unstable)? else {
            return Ok(Outcome::Pruned);
        };

        let flat = self.simulate(&point, &bounds);
        let unresolved = node.choices.iter().any(Option::is_none);
        let leaf = unstable.is_empty() && !unresolved;
        let tol = if leaf { self.cfg.tol_net } else { INNER_TOL };
        if self.query.is_counterexample(&flat, tol) {
            return Ok(Outcome::Found(flat));
        }

        // Or-group violated by the simulated point.
        let violated = node.choices.iter().enumerate().find(|(g, choice)| {
            choice.is_none()
                && !self.combined.groups[*g]
                    .iter()
                    .any(|conj: &Conjunction| conj.iter().all(|a| a.holds(&flat, INNER_TOL)))
        });
        let group = violated.map(|(g, _)| g).or_else(|| {
            if unstable.is_empty() {
                node.choices.iter().position(Option::is_none)
            } else {
                None
            }
        });
        if let Some(g) = group {
            let children = (0..self.combined.groups[g].len())
                .map(|c| {
                    let mut child = node.clone();
                    child.choices[g] = Some(c);
                    child
                })
                .collect();
            return Ok(Outcome::Split(children));
        }

        if unstable.is_empty() {
            tracing::debug!("exact leaf point failed re-simulation");
            self.numerical_trouble = true;
            return Ok(Outcome::Pruned);
        }

        // Widest unstable neuron; ties keep the first in (step, layer, neuron) order.
        let mut best = unstable[0];
        let width = |i: usize| bounds.pre[i].1 - bounds.pre[i].0;
        for &i in &unstable[1..] {
            if width(i) > width(best) {
                best = i;
            }
        }
        let mut active = node.clone();
        active.phases[best] = ACTIVE;
        let mut inactive = node.clone();
        inactive.phases[best] = INACTIVE;
        Ok(Outcome::Split(vec![active, inactive]))
    }

    /// ReLU neurons with free phase and a pre-activation interval straddling zero.
    fn unstable(&self, node: &Node, bounds: &Bounds) -> Vec<usize> {
        let layers = self.query.unrolled.base().layers();
        let mut out = Vec::new();
        for pos in 0..self.layout.steps.len() {
            for l in 0..self.layout.hidden_layers() {
                if layers[l].activation != Activation::Relu {
                    continue;
                }
                for j in 0..self.layout.width(l) {
                    let idx = self.layout.index(pos, l, j);
                    let (lo, hi) = bounds.pre[idx];
                    if node.phases[idx] == FREE && lo < 0.0 && hi > 0.0 {
                        out.push(idx);
                    }
                }
            }
        }
        out
    }

    /// Solve the node LP. Returns the LP point when the largest atom violation is at most [`T_EPS`].
    fn relaxation(
        &self,
        node: &Node,
        atoms: &[&Atom],
        bounds: &Bounds,
        unstable: &[usize],
    ) -> Result<Option<Vec<f64>>, VerifyError> {
        let unrolled = &self.query.unrolled;
        let net = unrolled.base();
        let layers = net.layers();
        let n_flat = unrolled.num_vars();
        let t = n_flat;
        let n_cols = n_flat + 1 + unstable.len();
        let mut lp = LinearProgram::new(n_cols);
        for v in 0..n_flat {
            lp.set_bounds(v, bounds.lo[v], bounds.hi[v]);
        }
        lp.set_bounds(t, -1.0, f64::INFINITY);

        let mut next_col = n_flat + 1;
        for (pos, &step) in self.layout.steps.iter().enumerate() {
            let mut cur: Vec<Lin> = (0..net.input_dim())
                .map(|j| Lin::var(n_cols, unrolled.x_id(step, j)))
                .collect();
            for (l, layer) in layers.iter().enumerate() {
                let z: Vec<Lin> = layer
                    .weights
                    .iter()
                    .zip(&layer.bias)
                    .map(|(row, b)| {
                        let mut acc = Lin::zero(n_cols);
                        acc.c = *b;
                        for (w, a) in row.iter().zip(&cur) {
                            acc.axpy(*w, a);
                        }
                        acc
                    })
                    .collect();
                if l + 1 == layers.len() {
                    for (j, zj) in z.iter().enumerate() {
                        let mut row = zj.sparse();
                        for e in &mut row {
                            e.1 = -e.1;
                        }
                        row.push((unrolled.y_id(step, j), 1.0));
                        lp.add_row(row, Sense::Eq, zj.c);
                    }
                    break;
                }
                let mut next = Vec::with_capacity(z.len());
                for (j, zj) in z.into_iter().enumerate() {
                    if layer.activation != Activation::Relu {
                        next.push(zj);
                        continue;
                    }
                    let idx = self.layout.index(pos, l, j);
                    let (lo, hi) = bounds.pre[idx];
                    let phase = node.phases[idx];
                    if phase == ACTIVE || (phase == FREE && lo >= 0.0) {
                        if phase == ACTIVE {
                            lp.add_row(zj.sparse(), Sense::Ge, -zj.c);
                        }
                        next.push(zj);
                    } else if phase == INACTIVE || (phase == FREE && hi <= 0.0) {
                        if phase == INACTIVE {
                            lp.add_row(zj.sparse(), Sense::Le, -zj.c);
                        }
                        next.push(Lin::zero(n_cols));
                    } else {
                        let a = next_col;
                        next_col += 1;
                        lp.set_bounds(a, 0.0, if hi.is_finite() { hi } else { f64::INFINITY });
                        // a >= z
                        let mut row = zj.sparse();
                        for e in &mut row {
                            e.1 = -e.1;
                        }
                        row.push((a, 1.0));
                        lp.add_row(row, Sense::Ge, zj.c);
                        // a <= s (z - lo) with s = hi / (hi - lo)
                        if lo.is_finite() && hi.is_finite() {
                            let s = hi / (hi - lo);
                            let mut row: Vec<(usize, f64)> =
                                zj.sparse().into_iter().map(|(i, c)| (i, -s * c)).collect();
                            row.push((a, 1.0));
                            lp.add_row(row, Sense::Le, s * (zj.c - lo));
                        }
                        next.push(Lin::var(n_cols, a));
                    }
                }
                cur = next;
            }
        }
        debug_assert_eq!(next_col, n_cols);

        for atom in atoms {
            if atom.expr.terms.is_empty() {
                continue;
            }
            let mut row = atom.expr.terms.clone();
            row.push((t, -1.0));
            lp.add_row(row, Sense::Le, -atom.expr.constant);
        }
        let mut objective = vec![0.0; n_cols];
        objective[t] = 1.0;
        lp.set_objective(objective);
        match lp.solve()? {
            LpOutcome::Optimal { x, .. } if x[t] <= T_EPS => Ok(Some(x)),
            _ => Ok(None),
        }
    }

    /// Re-simulate LP inputs; steps outside the query take an in-bounds input.
    fn simulate(&self, point: &[f64], bounds: &Bounds) -> Vec<f64> {
        let unrolled = &self.query.unrolled;
        let n = unrolled.base().input_dim();
        let xs: Vec<Vec<f64>> = (0..unrolled.depth())
            .map(|step| {
                (0..n)
                    .map(|j| {
                        let v = unrolled.x_id(step, j);
                        let raw = if self.layout.steps.contains(&step) {
                            point[v]
                        } else {
                            0.0
                        };
                        raw.clamp(
                            bounds.lo[v].min(bounds.hi[v]),
                            bounds.hi[v].max(bounds.lo[v]),
                        )
                    })
                    .collect()
            })
            .collect();
        unrolled.simulate(&xs)
    }
}

fn node_atoms<'n>(combined: &'n Compiled, node: &Node) -> Vec<&'n Atom> {
    let mut atoms: Vec<&Atom> = combined.linear.iter().collect();
    for (g, choice) in node.choices.iter().enumerate() {
        if let Some(c) = choice {
            atoms.extend(combined.groups[g][*c].iter());
        }
    }
    atoms
}

enum Outcome {
    Pruned,
    Found(Vec<f64>),
    Split(Vec<Node>),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{Formula, LinExpr};
    use crate::network::{Layer, Network};

    fn le(id: usize, c: f64, k: f64) -> Formula {
        Formula::Atom(Atom::le_zero(LinExpr::from_terms([(id, c)], k)))
    }

    fn identity() -> Network {
        Network::new(vec![Layer::new(
            vec![vec![1.0]],
            vec![0.0],
            Activation::Identity,
        )])
        .unwrap()
    }

    fn box_query(net: &Network, lo: f64, hi: f64, post_lo: f64) -> ConstraintQuery {
        let pre = Formula::And(vec![le(0, -1.0, lo), le(0, 1.0, -hi)]);
        let post = le(1, -1.0, post_lo); // y >= post_lo
        ConstraintQuery::new(net.unroll(1), pre, post.negate()).unwrap()
    }

    #[test]
    fn identity_proven_on_boundary() {
        let r = solve(
            &box_query(&identity(), 0.0, 1.0, 0.0),
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(r.status, Status::Proven);
    }

    #[test]
    fn identity_falsified_with_witness() {
        let q = box_query(&identity(), 0.0, 1.0, 0.5);
        let r = solve(&q, &SolverConfig::default()).unwrap();
        assert_eq!(r.status, Status::Falsified);
        let w = r.witness.unwrap();
        assert!(w.x[0][0] < 0.5 && w.x[0][0] >= 0.0);
        assert_eq!(w.y[0][0], w.x[0][0]);
    }

    #[test]
    fn abs_net_needs_branching() {
        // y = relu(x) + relu(-x) = |x| over [-1, 1]; y >= 0 holds, y >= 0.1 fails only near 0.
        let net = Network::new(vec![
            Layer::new(
                vec![vec![1.0], vec![-1.0]],
                vec![0.0, 0.0],
                Activation::Relu,
            ),
            Layer::new(vec![vec![1.0, 1.0]], vec![0.0], Activation::Identity),
        ])
        .unwrap();
        let r = solve(&box_query(&net, -1.0, 1.0, 0.0), &SolverConfig::default()).unwrap();
        assert_eq!(r.status, Status::Proven);
        let r = solve(&box_query(&net, -1.0, 1.0, 0.1), &SolverConfig::default()).unwrap();
        assert_eq!(r.status, Status::Falsified);
        assert!(r.witness.unwrap().y[0][0] < 0.1);
    }

    #[test]
    fn tanh_refused() {
        let net = Network::new(vec![
            Layer::new(vec![vec![1.0]], vec![0.0], Activation::Tanh),
            Layer::new(vec![vec![1.0]], vec![0.0], Activation::Identity),
        ])
        .unwrap();
        assert!(matches!(
            solve(&box_query(&net, 0.0, 1.0, 0.0), &SolverConfig::default()),
            Err(VerifyError::NonPiecewiseLinear)
        ));
    }

    #[test]
    fn budget_exhaustion_is_unknown() {
        let net = Network::new(vec![
            Layer::new(
                vec![vec![1.0], vec![-1.0]],
                vec![0.0, 0.0],
                Activation::Relu,
            ),
            Layer::new(vec![vec![1.0, 1.0]], vec![0.0], Activation::Identity),
        ])
        .unwrap();
        let r = solve(
            &box_query(&net, -1.0, 1.0, 0.0),
            &SolverConfig::default().with_node_budget(0),
        )
        .unwrap();
        assert_eq!(r.status, Status::Unknown);
    }
}
