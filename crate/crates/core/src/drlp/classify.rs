//! Split a precondition into state-bound, initial, transition and other parts.

use super::ast::{CmpOp, Domain, Expr, Io, Stmt};
use super::{DrlpError, DrlpScript};
use crate::formula::Formula;
use serde::Serialize;
use std::collections::BTreeSet;

const PROBE_DEPTH: usize = 3;
const MAX_PROBE_DEPTH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    /// Per-step bounds on inputs, applied at every step.
    State,
    /// Constraints on the first input only.
    Initial,
    /// Links between consecutive steps.
    Transition,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PostKind {
    Forall,
    Exist,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionedProperty {
    /// Part of each top-level precondition statement, by index.
    pub parts: Vec<Part>,
    /// Explanations for statements placed in [`Part::Other`].
    pub notes: Vec<(usize, String)>,
    pub post: PostKind,
}

impl PartitionedProperty {
    pub fn indices(&self, part: Part) -> Vec<usize> {
        self.parts
            .iter()
            .enumerate()
            .filter(|(_, p)| **p == part)
            .map(|(i, _)| i)
            .collect()
    }
}

struct VarInfo {
    step: usize,
    io: Io,
}

fn var_info(id: usize, n: usize, m: usize) -> VarInfo {
    let block = n + m;
    VarInfo {
        step: id / block,
        io: if id % block < n { Io::X } else { Io::Y },
    }
}

/// Lower one statement at the smallest probe depth that keeps every step in range.
fn probe(script: &DrlpScript, stmt: &Stmt) -> Result<(Formula, usize), DrlpError> {
    let mut last = None;
    for k in PROBE_DEPTH..=MAX_PROBE_DEPTH {
        match script.lower(std::slice::from_ref(stmt), k) {
            Ok(mut f) => return Ok((f.pop().expect("one statement").simplify(), k)),
            Err(e @ DrlpError::StepOutOfRange(_)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one probe"))
}

fn classify_stmt(script: &DrlpScript, stmt: &Stmt) -> Result<(Part, Option<String>), DrlpError> {
    let (f, k) = probe(script, stmt)?;
    let (n, m) = (script.x_size, script.y_size);
    let vars = f.vars();
    if vars.is_empty() {
        return Ok((
            Part::Other,
            Some("constraint has no model variables".into()),
        ));
    }
    let infos: Vec<VarInfo> = vars.iter().map(|id| var_info(*id, n, m)).collect();
    let only_x = infos.iter().all(|v| v.io == Io::X);
    let steps: BTreeSet<usize> = infos.iter().map(|v| v.step).collect();
    let conjuncts = f.conjuncts();

    let bound_atoms = conjuncts.iter().all(|c| match c {
        Formula::Atom(a) => a.vars().count() == 1,
        _ => false,
    });
    if only_x && bound_atoms && steps.len() == k {
        return Ok((Part::State, None));
    }
    if only_x && steps.len() == 1 && steps.contains(&0) {
        return Ok((Part::Initial, None));
    }
    let has_ne = super::ast::uses_op(std::slice::from_ref(stmt), CmpOp::Ne);
    if has_ne {
        return Ok((
            Part::Other,
            Some("disequality between steps (cycle exclusion)".into()),
        ));
    }
    let consecutive = conjuncts.iter().all(|c| {
        let s: BTreeSet<usize> = c.vars().iter().map(|id| var_info(*id, n, m).step).collect();
        match (s.first(), s.last()) {
            (Some(lo), Some(hi)) => hi - lo <= 1,
            _ => true,
        }
    });
    let links = !only_x || steps.len() > 1;
    if links && consecutive {
        return Ok((Part::Transition, None));
    }
    let note = if only_x {
        "input constraint that is neither a per-step bound nor initial"
    } else {
        "constraint spans non-consecutive steps"
    };
    Ok((Part::Other, Some(note.into())))
}

fn orange_over_y(stmts: &[Stmt]) -> bool {
    stmts.iter().any(|s| match s {
        Stmt::For {
            domain: Domain::Orange,
            body,
            ..
        } => {
            let mut found = false;
            super::ast::visit_exprs(body, &mut |e| {
                found |= matches!(e, Expr::IoRef { io: Io::Y, .. })
            });
            found || orange_over_y(body)
        }
        Stmt::For { body, .. } | Stmt::With { body, .. } => orange_over_y(body),
        Stmt::Cond(_) => false,
    })
}

/// Partition the precondition statements and tag the postcondition.
pub fn classify_parts(script: &DrlpScript) -> Result<PartitionedProperty, DrlpError> {
    let mut parts = Vec::with_capacity(script.pre.len());
    let mut notes = Vec::new();
    for (i, stmt) in script.pre.iter().enumerate() {
        let (part, note) = classify_stmt(script, stmt)?;
        parts.push(part);
        if let Some(note) = note {
            tracing::debug!(statement = i, %note, "placed in other");
            notes.push((i, note));
        }
    }
    let post = if orange_over_y(&script.post) {
        PostKind::Exist
    } else {
        PostKind::Forall
    };
    Ok(PartitionedProperty { parts, notes, post })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drlp::parse;

    fn classify(src: &str) -> PartitionedProperty {
        classify_parts(&parse(src).unwrap().into_script().unwrap()).unwrap()
    }

    #[test]
    fn safety_shape() {
        let p = classify(
            "@Pre\ny_size=1\nfor i in range(0, k):\n    [-1]*2 <= x[i] <= [1]*2\nx[0] == [0]*2\nfor i in range(0, k-1):\n    Implies(y[i] > 0, x[i+1][0] - x[i][0] <= 0.5)\n@Exp\nfor i in range(0, k):\n    y[i] >= -2\n",
        );
        assert_eq!(p.parts, vec![Part::State, Part::Initial, Part::Transition]);
        assert_eq!(p.post, PostKind::Forall);
    }

    #[test]
    fn cycle_exclusion_is_other() {
        let p = classify(
            "@Pre\nx_size=1\ny_size=1\nfor i in range(0, k):\n    for j in range(i+1, k):\n        x[i] != x[j]\n@Exp\nfor i in orange(0, k):\n    y[i] >= 1\n",
        );
        assert_eq!(p.parts, vec![Part::Other]);
        assert_eq!(p.post, PostKind::Exist);
        assert_eq!(p.notes.len(), 1);
    }

    #[test]
    fn one_shot() {
        let p = classify("@Pre\n0 <= x[0][0] <= 1\n@Exp\ny[0][0] >= 0\n");
        assert_eq!(p.parts, vec![Part::Initial]);
        assert!(p.indices(Part::State).is_empty());
    }
}
