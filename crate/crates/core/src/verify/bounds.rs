//! Bound tightening over atoms and network copies.

use crate::formula::Atom;
use crate::network::{affine_interval, Activation, IntervalBox, UnrolledNetwork};

pub(crate) const FREE: i8 = 0;
pub(crate) const ACTIVE: i8 = 1;
pub(crate) const INACTIVE: i8 = -1;

const ROUNDS: usize = 4;

fn slack(a: f64, b: f64) -> f64 {
    1e-12 * (1.0 + a.abs().min(1e12) + b.abs().min(1e12))
}

/// Hidden neurons of the steps that take part in a query.
#[derive(Debug, Clone)]
pub(crate) struct NeuronLayout {
    pub steps: Vec<usize>,
    offsets: Vec<usize>,
    widths: Vec<usize>,
    pub per_step: usize,
}

impl NeuronLayout {
    pub fn new(unrolled: &UnrolledNetwork, steps: Vec<usize>) -> Self {
        let layers = unrolled.base().layers();
        let mut offsets = Vec::new();
        let mut widths = Vec::new();
        let mut acc = 0;
        for l in &layers[..layers.len() - 1] {
            offsets.push(acc);
            widths.push(l.out_dim());
            acc += l.out_dim();
        }
        Self {
            steps,
            offsets,
            widths,
            per_step: acc,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len() * self.per_step
    }

    pub fn index(&self, pos: usize, layer: usize, neuron: usize) -> usize {
        pos * self.per_step + self.offsets[layer] + neuron
    }

    pub fn hidden_layers(&self) -> usize {
        self.widths.len()
    }

    pub fn width(&self, layer: usize) -> usize {
        self.widths[layer]
    }
}

/// Variable bounds plus pre-activation bounds of every hidden neuron.
#[derive(Debug, Clone)]
pub(crate) struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub pre: Vec<(f64, f64)>,
}

/// Tighten bounds with the atoms and forward interval propagation.
/// Returns `None` when the bounds become empty.
pub(crate) fn tighten(
    atoms: &[&Atom],
    unrolled: &UnrolledNetwork,
    layout: &NeuronLayout,
    phases: &[i8],
    mut lo: Vec<f64>,
    mut hi: Vec<f64>,
) -> Option<Bounds> {
    let mut pre = vec![(f64::NEG_INFINITY, f64::INFINITY); layout.len()];
    for _ in 0..ROUNDS {
        let mut changed = false;
        for atom in atoms {
            changed |= propagate_atom(atom, &mut lo, &mut hi)?;
        }
        changed |= propagate_network(unrolled, layout, phases, &mut lo, &mut hi, &mut pre)?;
        if !changed {
            break;
        }
    }
    Some(Bounds { lo, hi, pre })
}

fn update(lo: &mut [f64], hi: &mut [f64], v: usize, new_lo: f64, new_hi: f64) -> Option<bool> {
    let mut changed = false;
    if new_lo > lo[v] + 1e-9 * (1.0 + lo[v].abs().min(1e12))
        || (lo[v].is_infinite() && new_lo.is_finite())
    {
        changed = true;
    }
    if new_hi < hi[v] - 1e-9 * (1.0 + hi[v].abs().min(1e12))
        || (hi[v].is_infinite() && new_hi.is_finite())
    {
        changed = true;
    }
    lo[v] = lo[v].max(new_lo);
    hi[v] = hi[v].min(new_hi);
    if lo[v] > hi[v] {
        if lo[v] - hi[v] > slack(lo[v], hi[v]) {
            return None;
        }
        let mid = 0.5 * (lo[v] + hi[v]);
        lo[v] = mid;
        hi[v] = mid;
    }
    Some(changed)
}

fn propagate_atom(atom: &Atom, lo: &mut [f64], hi: &mut [f64]) -> Option<bool> {
    let terms = &atom.expr.terms;
    if terms.is_empty() {
        return if atom.expr.constant > slack(atom.expr.constant, 0.0) {
            None
        } else {
            Some(false)
        };
    }
    // Minimum of each term and the finite part of their sum.
    let mins: Vec<f64> = terms
        .iter()
        .map(|&(v, a)| if a > 0.0 { a * lo[v] } else { a * hi[v] })
        .collect();
    let infinite = mins.iter().filter(|m| m.is_infinite()).count();
    let finite_sum: f64 = mins.iter().filter(|m| m.is_finite()).sum();
    if infinite == 0 && finite_sum + atom.expr.constant > slack(finite_sum, atom.expr.constant) {
        return None;
    }
    let mut changed = false;
    for (i, &(v, a)) in terms.iter().enumerate() {
        let others = if mins[i].is_infinite() {
            if infinite > 1 {
                continue;
            }
            finite_sum
        } else {
            if infinite > 0 {
                continue;
            }
            finite_sum - mins[i]
        };
        let limit = (-atom.expr.constant - others) / a;
        changed |= if a > 0.0 {
            update(lo, hi, v, f64::NEG_INFINITY, limit)?
        } else {
            update(lo, hi, v, limit, f64::INFINITY)?
        };
    }
    Some(changed)
}

fn propagate_network(
    unrolled: &UnrolledNetwork,
    layout: &NeuronLayout,
    phases: &[i8],
    lo: &mut [f64],
    hi: &mut [f64],
    pre: &mut [(f64, f64)],
) -> Option<bool> {
    let net = unrolled.base();
    let (n, m) = (net.input_dim(), net.output_dim());
    let layers = net.layers();
    let mut changed = false;
    for (pos, &step) in layout.steps.iter().enumerate() {
        let ids: Vec<usize> = (0..n).map(|j| unrolled.x_id(step, j)).collect();
        let mut cur = IntervalBox {
            lower: ids.iter().map(|&v| lo[v]).collect(),
            upper: ids.iter().map(|&v| hi[v]).collect(),
        };
        for (l, layer) in layers.iter().enumerate() {
            let z = affine_interval(layer, &cur);
            if l + 1 == layers.len() {
                for j in 0..m {
                    changed |= update(lo, hi, unrolled.y_id(step, j), z.lower[j], z.upper[j])?;
                }
                break;
            }
            let mut next = IntervalBox {
                lower: Vec::with_capacity(z.dim()),
                upper: Vec::with_capacity(z.dim()),
            };
            for j in 0..z.dim() {
                let idx = layout.index(pos, l, j);
                let (mut zl, mut zu) = (z.lower[j].max(pre[idx].0), z.upper[j].min(pre[idx].1));
                let (al, au) = match layer.activation {
                    Activation::Relu => match phases[idx] {
                        ACTIVE => {
                            if zu < -slack(zu, 0.0) {
                                return None;
                            }
                            zl = zl.max(0.0);
                            zu = zu.max(zl);
                            (zl, zu)
                        }
                        INACTIVE => {
                            if zl > slack(zl, 0.0) {
                                return None;
                            }
                            zu = zu.min(0.0);
                            zl = zl.min(zu);
                            (0.0, 0.0)
                        }
                        _ => (zl.max(0.0), zu.max(0.0)),
                    },
                    Activation::Tanh => (zl.tanh(), zu.tanh()),
                    Activation::Identity => (zl, zu),
                };
                pre[idx] = (zl, zu);
                next.lower.push(al);
                next.upper.push(au);
            }
            cur = next;
        }
    }
    Some(changed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::LinExpr;
    use crate::network::{Layer, Network};

    fn identity_net() -> Network {
        Network::new(vec![Layer::new(
            vec![vec![1.0]],
            vec![0.0],
            Activation::Identity,
        )])
        .unwrap()
    }

    #[test]
    fn atoms_bound_inputs_and_network_bounds_outputs() {
        let u = identity_net().unroll(1);
        let layout = NeuronLayout::new(&u, vec![0]);
        // 0 <= x <= 1
        let a = Atom::le_zero(LinExpr::from_terms([(0, -1.0)], 0.0));
        let b = Atom::le_zero(LinExpr::from_terms([(0, 1.0)], -1.0));
        let inf = f64::INFINITY;
        let out = tighten(&[&a, &b], &u, &layout, &[], vec![-inf; 2], vec![inf; 2]).unwrap();
        assert_eq!((out.lo[1], out.hi[1]), (0.0, 1.0));
    }

    #[test]
    fn strict_margin_detected_as_empty() {
        let u = identity_net().unroll(1);
        let layout = NeuronLayout::new(&u, vec![0]);
        let a = Atom::le_zero(LinExpr::from_terms([(0, -1.0)], 0.0));
        let b = Atom::le_zero(LinExpr::from_terms([(0, 1.0)], -1.0));
        // y + 1e-9 <= 0 while y = x >= 0
        let c = Atom::le_zero(LinExpr::from_terms([(1, 1.0)], 1e-9));
        let inf = f64::INFINITY;
        assert!(tighten(&[&a, &b, &c], &u, &layout, &[], vec![-inf; 2], vec![inf; 2]).is_none());
    }
}
