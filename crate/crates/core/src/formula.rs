//! Affine atoms and Boolean formulas over flat variable ids.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

/// Margin used to relax strict inequalities to non-strict ones.
pub const STRICT_MARGIN: f64 = 1e-9;

/// `Σ coef·v + constant`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinExpr {
    /// Sorted by variable id, no zero coefficients.
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (usize, f64)>, constant: f64) -> Self {
        let mut v: Vec<(usize, f64)> = Vec::new();
        let mut sorted: Vec<(usize, f64)> = terms.into_iter().collect();
        sorted.sort_by_key(|t| t.0);
        for (id, c) in sorted {
            match v.last_mut() {
                Some(last) if last.0 == id => last.1 += c,
                _ => v.push((id, c)),
            }
        }
        v.retain(|t| t.1 != 0.0);
        Self { terms: v, constant }
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.terms
            .iter()
            .fold(self.constant, |acc, &(id, c)| acc + c * point[id])
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_terms(
            self.terms.iter().map(|&(id, c)| (id, c * s)),
            self.constant * s,
        )
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }
}

/// The constraint `expr <= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub expr: LinExpr,
}

impl Atom {
    pub fn le_zero(expr: LinExpr) -> Self {
        Self { expr }
    }

    /// Slack-tolerant check: `expr(point) <= tol`.
    pub fn holds(&self, point: &[f64], tol: f64) -> bool {
        self.expr.eval(point) <= tol
    }

    /// `expr > 0`, relaxed to `-expr + margin <= 0`.
    pub fn negate(&self) -> Self {
        let mut e = self.expr.scale(-1.0);
        e.constant += STRICT_MARGIN;
        Self { expr: e }
    }

    pub fn vars(&self) -> impl Iterator<Item = usize> + '_ {
        self.expr.terms.iter().map(|t| t.0)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for &(id, c) in &self.expr.terms {
            if first {
                write!(f, "{c}*v{id}")?;
            } else if c < 0.0 {
                write!(f, " - {}*v{id}", -c)?;
            } else {
                write!(f, " + {c}*v{id}")?;
            }
            first = false;
        }
        if first {
            write!(f, "{}", self.expr.constant)?;
        } else if self.expr.constant != 0.0 {
            write!(f, " + {}", self.expr.constant)?;
        }
        write!(f, " <= 0")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Formula {
    True,
    False,
    Atom(Atom),
    And(Vec<Formula>),
    Or(Vec<Formula>),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("disjunctive normal form exceeds {limit} terms")]
pub struct DnfTooLarge {
    pub limit: usize,
}

/// One conjunction of atoms.
pub type Conjunction = Vec<Atom>;

impl Formula {
    pub fn and(children: Vec<Formula>) -> Self {
        Formula::And(children)
    }

    pub fn or(children: Vec<Formula>) -> Self {
        Formula::Or(children)
    }

    pub fn implies(a: Formula, b: Formula) -> Self {
        Formula::Or(vec![a.negate(), b])
    }

    pub fn negate(&self) -> Formula {
        match self {
            Formula::True => Formula::False,
            Formula::False => Formula::True,
            Formula::Atom(a) => Formula::Atom(a.negate()),
            Formula::And(cs) => Formula::Or(cs.iter().map(Formula::negate).collect()),
            Formula::Or(cs) => Formula::And(cs.iter().map(Formula::negate).collect()),
        }
    }

    pub fn holds(&self, point: &[f64], tol: f64) -> bool {
        match self {
            Formula::True => true,
            Formula::False => false,
            Formula::Atom(a) => a.holds(point, tol),
            Formula::And(cs) => cs.iter().all(|c| c.holds(point, tol)),
            Formula::Or(cs) => cs.iter().any(|c| c.holds(point, tol)),
        }
    }

    /// Flatten nested And/Or and fold constants.
    pub fn simplify(&self) -> Formula {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => self.clone(),
            Formula::And(cs) => {
                let mut out = Vec::new();
                for c in cs {
                    match c.simplify() {
                        Formula::True => {}
                        Formula::False => return Formula::False,
                        Formula::And(inner) => out.extend(inner),
                        other => out.push(other),
                    }
                }
                match out.len() {
                    0 => Formula::True,
                    1 => out.pop().expect("one element"),
                    _ => Formula::And(out),
                }
            }
            Formula::Or(cs) => {
                let mut out = Vec::new();
                for c in cs {
                    match c.simplify() {
                        Formula::False => {}
                        Formula::True => return Formula::True,
                        Formula::Or(inner) => out.extend(inner),
                        other => out.push(other),
                    }
                }
                match out.len() {
                    0 => Formula::False,
                    1 => out.pop().expect("one element"),
                    _ => Formula::Or(out),
                }
            }
        }
    }

    /// Top-level conjuncts after simplification.
    pub fn conjuncts(&self) -> Vec<Formula> {
        match self.simplify() {
            Formula::True => Vec::new(),
            Formula::And(cs) => cs,
            other => vec![other],
        }
    }

    pub fn vars(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<usize>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(a) => out.extend(a.vars()),
            Formula::And(cs) | Formula::Or(cs) => cs.iter().for_each(|c| c.collect_vars(out)),
        }
    }

    pub fn atoms(&self) -> Vec<&Atom> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut Vec<&'a Atom>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(a) => out.push(a),
            Formula::And(cs) | Formula::Or(cs) => cs.iter().for_each(|c| c.collect_atoms(out)),
        }
    }

    /// Disjunctive normal form. An empty result means unsatisfiable; a single
    /// empty conjunction means valid.
    pub fn to_dnf(&self, limit: usize) -> Result<Vec<Conjunction>, DnfTooLarge> {
        match self {
            Formula::True => Ok(vec![Vec::new()]),
            Formula::False => Ok(Vec::new()),
            Formula::Atom(a) => Ok(vec![vec![a.clone()]]),
            Formula::Or(cs) => {
                let mut out = Vec::new();
                for c in cs {
                    out.extend(c.to_dnf(limit)?);
                    if out.len() > limit {
                        return Err(DnfTooLarge { limit });
                    }
                }
                Ok(out)
            }
            Formula::And(cs) => {
                let mut acc: Vec<Conjunction> = vec![Vec::new()];
                for c in cs {
                    let d = c.to_dnf(limit)?;
                    if d.is_empty() {
                        return Ok(Vec::new());
                    }
                    if acc.len() * d.len() > limit {
                        return Err(DnfTooLarge { limit });
                    }
                    let mut next = Vec::with_capacity(acc.len() * d.len());
                    for a in &acc {
                        for b in &d {
                            let mut conj = a.clone();
                            conj.extend(b.iter().cloned());
                            next.push(conj);
                        }
                    }
                    acc = next;
                }
                Ok(acc)
            }
        }
    }
}

/// A formula split into plain conjunctive atoms and Or-groups, each group a
/// list of alternative conjunctions.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Compiled {
    pub linear: Vec<Atom>,
    pub groups: Vec<Vec<Conjunction>>,
}

/// Per-conjunct DNF size cap used by [`Compiled::from_formula`].
pub const GROUP_LIMIT: usize = 1 << 16;

impl Compiled {
    pub fn from_formula(f: &Formula) -> Result<Self, DnfTooLarge> {
        let mut out = Compiled::default();
        out.extend(f)?;
        Ok(out)
    }

    pub fn extend(&mut self, f: &Formula) -> Result<(), DnfTooLarge> {
        for c in f.conjuncts() {
            let mut dnf = c.to_dnf(GROUP_LIMIT)?;
            match dnf.len() {
                1 => self.linear.append(&mut dnf[0]),
                _ => {
                    if dnf.iter().any(Vec::is_empty) {
                        continue; // one branch is trivially true
                    }
                    self.groups.push(dnf);
                }
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: Compiled) {
        self.linear.extend(other.linear);
        self.groups.extend(other.groups);
    }

    /// True when some group has no alternatives.
    pub fn trivially_false(&self) -> bool {
        self.groups.iter().any(Vec::is_empty)
    }

    pub fn holds(&self, point: &[f64], tol: f64) -> bool {
        self.linear.iter().all(|a| a.holds(point, tol))
            && self.groups.iter().all(|g| {
                g.iter()
                    .any(|conj| conj.iter().all(|a| a.holds(point, tol)))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atom(id: usize, c: f64, k: f64) -> Formula {
        Formula::Atom(Atom::le_zero(LinExpr::from_terms([(id, c)], k)))
    }

    #[test]
    fn negation_is_strict_complement() {
        let a = atom(0, 1.0, -1.0); // v0 <= 1
        let n = a.negate(); // v0 >= 1 + margin
        assert!(a.holds(&[1.0], 0.0));
        assert!(!n.holds(&[1.0], 0.0));
        assert!(n.holds(&[1.0 + 2.0 * STRICT_MARGIN], 0.0));
    }

    #[test]
    fn dnf_distributes() {
        let f = Formula::And(vec![
            Formula::Or(vec![atom(0, 1.0, 0.0), atom(1, 1.0, 0.0)]),
            Formula::Or(vec![
                atom(2, 1.0, 0.0),
                atom(3, 1.0, 0.0),
                atom(4, 1.0, 0.0),
            ]),
        ]);
        let d = f.to_dnf(100).unwrap();
        assert_eq!(d.len(), 6);
        assert!(d.iter().all(|c| c.len() == 2));
        assert!(f.to_dnf(5).is_err());
    }

    #[test]
    fn compile_splits_linear_and_groups() {
        let f = Formula::And(vec![
            atom(0, 1.0, -1.0),
            Formula::And(vec![atom(1, 1.0, 0.0)]),
            Formula::Or(vec![atom(2, 1.0, 0.0), atom(3, -1.0, 0.0)]),
        ]);
        let c = Compiled::from_formula(&f).unwrap();
        assert_eq!(c.linear.len(), 2);
        assert_eq!(c.groups.len(), 1);
        assert_eq!(c.groups[0].len(), 2);
    }

    #[test]
    fn simplify_folds_constants() {
        let f = Formula::And(vec![
            Formula::True,
            Formula::Or(vec![Formula::False, atom(0, 1.0, 0.0)]),
        ]);
        assert_eq!(f.simplify(), atom(0, 1.0, 0.0));
        assert_eq!(Formula::Or(vec![]).simplify(), Formula::False);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_formula() -> impl Strategy<Value = Formula> {
            let leaf =
                (0usize..3, -2.0f64..2.0, -1.0f64..1.0).prop_map(|(id, c, k)| atom(id, c, k));
            leaf.prop_recursive(3, 16, 3, |inner| {
                prop_oneof![
                    prop::collection::vec(inner.clone(), 1..3).prop_map(Formula::And),
                    prop::collection::vec(inner, 1..3).prop_map(Formula::Or),
                ]
            })
        }

        proptest! {
            #[test]
            fn dnf_preserves_truth(f in arb_formula(), p in prop::collection::vec(-2.0f64..2.0, 3)) {
                let d = f.to_dnf(1 << 12).unwrap();
                let via_dnf = d.iter().any(|c| c.iter().all(|a| a.holds(&p, 0.0)));
                prop_assert_eq!(via_dnf, f.holds(&p, 0.0));
                let c = Compiled::from_formula(&f).unwrap();
                prop_assert_eq!(c.holds(&p, 0.0), f.holds(&p, 0.0));
            }

            #[test]
            fn negation_flips_truth_away_from_boundary(f in arb_formula(), p in prop::collection::vec(-2.0f64..2.0, 3)) {
                let near = f.atoms().iter().any(|a| a.expr.eval(&p).abs() < 1e-6);
                prop_assume!(!near);
                prop_assert_eq!(f.negate().holds(&p, 0.0), !f.holds(&p, 0.0));
            }
        }
    }
}
