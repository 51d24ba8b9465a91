//! Sound but incomplete check by interval propagation.
//!
//! Works for any activation. Never returns `Falsified`.

use super::bounds::{tighten, NeuronLayout, FREE};
use super::{ConstraintQuery, SolverConfig, Stats, Status, VerifyError, VerifyResult};
use crate::formula::Atom;
use crate::lp::{LinearProgram, LpOutcome, Sense};
use std::collections::BTreeSet;
use std::time::Instant;

/// Prove a query by interval bounds, or give up with `Unknown`.
pub fn solve_interval(
    query: &ConstraintQuery,
    _cfg: &SolverConfig,
) -> Result<VerifyResult, VerifyError> {
    let start = Instant::now();
    let mut stats = Stats {
        nodes: 1,
        ..Stats::default()
    };
    let status = decide(query, &mut stats)?;
    let mut r = VerifyResult::new(status, query.depth());
    stats.wall_ms = start.elapsed().as_millis() as u64;
    r.stats = stats;
    Ok(r)
}

fn decide(query: &ConstraintQuery, stats: &mut Stats) -> Result<Status, VerifyError> {
    let combined = query.combined();
    if combined.trivially_false() {
        return Ok(Status::Proven);
    }
    let unrolled = &query.unrolled;
    let block = unrolled.block();
    let mut steps = BTreeSet::new();
    for a in combined
        .linear
        .iter()
        .chain(combined.groups.iter().flatten().flatten())
    {
        steps.extend(a.vars().map(|v| v / block));
    }
    let layout = NeuronLayout::new(unrolled, steps.iter().copied().collect());
    let phases = vec![FREE; layout.len()];
    let n_flat = unrolled.num_vars();
    let inf = f64::INFINITY;
    let linear: Vec<&Atom> = combined.linear.iter().collect();
    let Some(bounds) = tighten(
        &linear,
        unrolled,
        &layout,
        &phases,
        vec![-inf; n_flat],
        vec![inf; n_flat],
    ) else {
        return Ok(Status::Proven);
    };
    for &step in &steps {
        for feature in 0..unrolled.base().input_dim() {
            let v = unrolled.x_id(step, feature);
            if !bounds.lo[v].is_finite() || !bounds.hi[v].is_finite() {
                return Err(VerifyError::UnboundedInput { step, feature });
            }
        }
    }

    let feasible = |atoms: &[&Atom], stats: &mut Stats| -> Result<bool, VerifyError> {
        let Some(b) = tighten(
            atoms,
            unrolled,
            &layout,
            &phases,
            bounds.lo.clone(),
            bounds.hi.clone(),
        ) else {
            return Ok(false);
        };
        stats.lp_calls += 1;
        let mut lp = LinearProgram::new(n_flat);
        for v in 0..n_flat {
            lp.set_bounds(v, b.lo[v], b.hi[v]);
        }
        for a in atoms {
            if !a.expr.terms.is_empty() {
                // Strict margins below the LP tolerance are dropped here; the result stays sound.
                lp.add_row(a.expr.terms.clone(), Sense::Le, -a.expr.constant);
            }
        }
        lp.set_objective(vec![0.0; n_flat]);
        Ok(!matches!(lp.solve()?, LpOutcome::Infeasible))
    };

    if !feasible(&linear, stats)? {
        return Ok(Status::Proven);
    }
    for group in &combined.groups {
        let mut any = false;
        for conj in group {
            let atoms: Vec<&Atom> = linear.iter().copied().chain(conj.iter()).collect();
            if feasible(&atoms, stats)? {
                any = true;
                break;
            }
        }
        if !any {
            return Ok(Status::Proven);
        }
    }
    Ok(Status::Unknown)
}
