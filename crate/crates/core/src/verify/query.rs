use super::VerifyError;
use crate::drlp::{classify_parts, DrlpScript, Part, PostKind};
use crate::formula::{Compiled, Formula};
use crate::network::{Network, UnrolledNetwork};
use std::collections::BTreeSet;

/// Search for an assignment satisfying `P ∧ ¬Q` over `depth` network copies.
#[derive(Debug, Clone)]
pub struct ConstraintQuery {
    pub unrolled: UnrolledNetwork,
    /// Precondition split into plain atoms and Or-groups.
    pub constraints: Compiled,
    /// Negated postcondition in the same form.
    pub negated_post: Compiled,
    pub pre_formula: Formula,
    pub negated_post_formula: Formula,
}

impl ConstraintQuery {
    pub fn new(
        unrolled: UnrolledNetwork,
        pre: Formula,
        negated_post: Formula,
    ) -> Result<Self, VerifyError> {
        let pre = pre.simplify();
        let negated_post = negated_post.simplify();
        Ok(Self {
            constraints: Compiled::from_formula(&pre)?,
            negated_post: Compiled::from_formula(&negated_post)?,
            unrolled,
            pre_formula: pre,
            negated_post_formula: negated_post,
        })
    }

    pub fn depth(&self) -> usize {
        self.unrolled.depth()
    }

    pub fn combined(&self) -> Compiled {
        let mut c = self.constraints.clone();
        c.merge(self.negated_post.clone());
        c
    }

    /// Does a flat assignment satisfy `P ∧ ¬Q` within `tol`?
    pub fn is_counterexample(&self, flat: &[f64], tol: f64) -> bool {
        self.pre_formula.holds(flat, tol) && self.negated_post_formula.holds(flat, tol)
    }
}

fn check_arity(script: &DrlpScript, net: &Network) -> Result<(), VerifyError> {
    if script.x_size != net.input_dim() || script.y_size != net.output_dim() {
        return Err(VerifyError::Arity {
            script_n: script.x_size,
            script_m: script.y_size,
            net_n: net.input_dim(),
            net_m: net.output_dim(),
        });
    }
    Ok(())
}

/// Bounded model checking query at depth `k`.
pub fn build_query(
    script: &DrlpScript,
    net: &Network,
    k: usize,
) -> Result<ConstraintQuery, VerifyError> {
    check_arity(script, net)?;
    let pre = script.precondition(k)?;
    let post = script.postcondition(k)?;
    ConstraintQuery::new(net.unroll(k), pre, post.negate())
}

/// Inductive step at depth `k`: `k + 1` copies without the initial
/// condition, the postcondition assumed on steps `0..k` and violated at `k`.
pub fn build_induction_query(
    script: &DrlpScript,
    net: &Network,
    k: usize,
) -> Result<ConstraintQuery, VerifyError> {
    check_arity(script, net)?;
    let parts = classify_parts(script)?;
    if parts.post == PostKind::Exist {
        return Err(VerifyError::NotInductible(
            "the postcondition is existential over steps".into(),
        ));
    }
    let depth = k + 1;
    let kept: Vec<_> = script
        .pre
        .iter()
        .zip(&parts.parts)
        .filter(|(_, p)| **p != Part::Initial)
        .map(|(s, _)| s.clone())
        .collect();
    let mut pre = script.lower(&kept, depth)?;

    let block = script.x_size + script.y_size;
    let mut assumed = Vec::new();
    let mut last = Vec::new();
    for c in script.postcondition(depth)?.conjuncts() {
        let steps: BTreeSet<usize> = c.vars().iter().map(|id| id / block).collect();
        match (steps.first(), steps.last()) {
            (None, _) => {}
            (Some(lo), Some(hi)) if lo != hi => {
                return Err(VerifyError::NotInductible(format!(
                    "a postcondition conjunct spans steps {lo} to {hi}"
                )))
            }
            (Some(&s), _) if s == k => last.push(c),
            _ => assumed.push(c),
        }
    }
    pre.extend(assumed);
    ConstraintQuery::new(
        net.unroll(depth),
        Formula::And(pre),
        Formula::And(last).negate(),
    )
}
