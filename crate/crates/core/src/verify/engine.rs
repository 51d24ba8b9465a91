use super::{
    build_induction_query, build_query, solve, solve_interval, ConstraintQuery, Guarantee,
    SolverConfig, Stats, Status, VerifyError, VerifyResult,
};
use crate::drlp::{classify_parts, DrlpScript, PostKind};
use crate::network::Network;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Depth iteration strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bmc,
    #[default]
    #[serde(rename = "kind")]
    KInduction,
    Interval,
}

/// Complete search for piecewise-linear networks, interval bounds otherwise.
pub fn solve_auto(
    query: &ConstraintQuery,
    cfg: &SolverConfig,
) -> Result<VerifyResult, VerifyError> {
    if query.unrolled.base().is_piecewise_linear() {
        solve(query, cfg)
    } else {
        tracing::info!("network is not piecewise linear; using interval bounds");
        solve_interval(query, cfg)
    }
}

fn bmc_with(
    script: &DrlpScript,
    net: &Network,
    k_max: usize,
    cfg: &SolverConfig,
    oracle: fn(&ConstraintQuery, &SolverConfig) -> Result<VerifyResult, VerifyError>,
) -> Result<VerifyResult, VerifyError> {
    let mut stats = Stats::default();
    for k in 1..=k_max.max(1) {
        let mut r = oracle(&build_query(script, net, k)?, cfg)?;
        tracing::debug!(k, status = ?r.status, "bmc depth");
        stats.absorb(r.stats);
        match r.status {
            Status::Proven if k < k_max => continue,
            Status::Proven => {
                r.guarantee = Some(Guarantee::Bounded);
                r.stats = stats;
                return Ok(r);
            }
            _ => {
                r.stats = stats;
                return Ok(r);
            }
        }
    }
    unreachable!("loop returns at k_max")
}

/// Bounded model checking for depths `1..=k_max`.
pub fn bmc(
    script: &DrlpScript,
    net: &Network,
    k_max: usize,
    cfg: &SolverConfig,
) -> Result<VerifyResult, VerifyError> {
    bmc_with(script, net, k_max, cfg, solve_auto)
}

/// k-induction for depths `1..=k_max`.
pub fn k_induction(
    script: &DrlpScript,
    net: &Network,
    k_max: usize,
    cfg: &SolverConfig,
) -> Result<VerifyResult, VerifyError> {
    if classify_parts(script)?.post == PostKind::Exist {
        return Err(VerifyError::NotInductible(
            "the postcondition is existential over steps".into(),
        ));
    }
    let mut stats = Stats::default();
    let k_max = k_max.max(1);
    for k in 1..=k_max {
        let mut base = solve_auto(&build_query(script, net, k)?, cfg)?;
        stats.absorb(base.stats);
        match base.status {
            Status::Falsified => {
                base.stats = stats;
                return Ok(base);
            }
            Status::Unknown => continue,
            Status::Proven => {}
        }
        let step = match solve_auto(&build_induction_query(script, net, k)?, cfg) {
            Ok(r) => r,
            Err(VerifyError::UnboundedInput { .. }) => VerifyResult::new(Status::Unknown, k + 1),
            Err(e) => return Err(e),
        };
        stats.absorb(step.stats);
        tracing::debug!(k, step = ?step.status, "inductive step");
        if step.status == Status::Proven {
            let mut r = VerifyResult::new(Status::Proven, k);
            r.guarantee = Some(Guarantee::Unbounded);
            r.stats = stats;
            return Ok(r);
        }
    }
    let mut r = VerifyResult::new(Status::Unknown, k_max);
    r.stats = stats;
    Ok(r)
}

/// Run one verification with the chosen method.
pub fn verify(
    script: &DrlpScript,
    net: &Network,
    k_max: usize,
    method: Method,
    cfg: &SolverConfig,
) -> Result<VerifyResult, VerifyError> {
    let start = Instant::now();
    let mut r = match method {
        Method::Bmc => bmc(script, net, k_max, cfg)?,
        Method::KInduction => k_induction(script, net, k_max, cfg)?,
        Method::Interval => bmc_with(script, net, k_max, cfg, solve_interval)?,
    };
    r.stats.wall_ms = start.elapsed().as_millis() as u64;
    Ok(r)
}
