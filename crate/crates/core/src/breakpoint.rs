//! Breakpoint search over DRLP templates.
//!
//! A breakpoint is a pair of adjacent parameter values whose verification
//! verdicts differ. All template parameters except the last are stepped
//! linearly; the last one is searched with the method given in its
//! [`VarSpec`]. Each combination of outer values is a *slice*.

use crate::drlp::{DrlpError, DrlpScript, DrlpTemplate, Parsed};
use crate::network::Network;
use crate::verify::{build_query, Status, VerifyError, VerifyResult, Witness};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Relative slack when comparing bracket widths with the precision.
const WIDTH_SLACK: f64 = 1e-9;
/// Bisection steps spent extending a counterexample over parameter values.
const REUSE_STEPS: usize = 40;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("search spec is empty")]
    EmptySpec,
    #[error("search spec covers {spec:?} but the template's free parameters are {template:?}")]
    SpecMismatch {
        spec: Vec<String>,
        template: Vec<String>,
    },
    #[error("invalid search spec for `{variable}`: {reason}")]
    InvalidSpec { variable: String, reason: String },
    #[error("verification returned Unknown for `{variable}` = {value}")]
    UnknownVerdict { variable: String, value: f64 },
    #[error(transparent)]
    Drlp(#[from] DrlpError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMethod {
    Linear,
    Binary,
    Iterative,
}

/// Search range for one template parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarSpec {
    pub name: String,
    pub lower_bound: f64,
    pub upper_bound: f64,
    #[serde(alias = "precise")]
    pub precision: f64,
    pub method: SearchMethod,
    /// Growth factor of the offset from `lower_bound` for iterative search.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterative_step: Option<f64>,
}

impl VarSpec {
    pub fn new(
        name: &str,
        lower_bound: f64,
        upper_bound: f64,
        precision: f64,
        method: SearchMethod,
    ) -> Self {
        Self {
            name: name.to_string(),
            lower_bound,
            upper_bound,
            precision,
            method,
            iterative_step: None,
        }
    }

    pub fn with_iterative_step(mut self, step: f64) -> Self {
        self.iterative_step = Some(step);
        self
    }

    fn validate(&self) -> Result<(), SearchError> {
        let fail = |reason: &str| {
            Err(SearchError::InvalidSpec {
                variable: self.name.clone(),
                reason: reason.into(),
            })
        };
        if !self.lower_bound.is_finite() || !self.upper_bound.is_finite() {
            return fail("bounds must be finite");
        }
        if self.lower_bound > self.upper_bound {
            return fail("lower_bound exceeds upper_bound");
        }
        if !(self.precision > 0.0 && self.precision.is_finite()) {
            return fail("precision must be positive");
        }
        if self.method == SearchMethod::Iterative && !self.iterative_step.is_some_and(|s| s > 1.0) {
            return fail("iterative search needs iterative_step > 1");
        }
        Ok(())
    }

    fn lattice(&self) -> Lattice {
        Lattice::new(self.lower_bound, self.upper_bound, self.precision)
    }
}

/// Points `lb + i * p` for `i < n`, closed by `ub` at index `n`.
#[derive(Debug, Clone, Copy)]
struct Lattice {
    lb: f64,
    ub: f64,
    p: f64,
    n: usize,
}

impl Lattice {
    fn new(lb: f64, ub: f64, p: f64) -> Self {
        let n = ((ub - lb) / p - WIDTH_SLACK).ceil().max(0.0) as usize;
        Self { lb, ub, p, n }
    }

    fn value(&self, i: usize) -> f64 {
        if i >= self.n {
            self.ub
        } else {
            self.lb + i as f64 * self.p
        }
    }

    /// Largest index whose value does not exceed `v`.
    fn floor(&self, v: f64) -> usize {
        (((v - self.lb) / self.p + WIDTH_SLACK).floor().max(0.0) as usize).min(self.n)
    }

    /// Smallest index whose value is at least `v`.
    fn ceil(&self, v: f64) -> usize {
        (((v - self.lb) / self.p - WIDTH_SLACK).ceil().max(0.0) as usize).min(self.n)
    }
}

/// Parameters to search, in processing order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SearchSpec {
    pub vars: Vec<VarSpec>,
}

impl SearchSpec {
    pub fn new(vars: Vec<VarSpec>) -> Self {
        Self { vars }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Breakpoint {
    pub variable: String,
    /// Values of the outer parameters for this slice.
    pub slice: Vec<(String, f64)>,
    /// Verdicts at the low and high end of the bracket.
    pub flip: (Status, Status),
    pub bracket: (f64, f64),
    /// Bracket midpoint.
    pub value: f64,
    /// The template concretized at `value`; serialized as DRLP source.
    #[serde(serialize_with = "as_source")]
    pub script: DrlpScript,
}

fn as_source<S: serde::Serializer>(script: &DrlpScript, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&script.to_source())
}

/// A slice abandoned because a probe returned Unknown.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbortedSlice {
    pub slice: Vec<(String, f64)>,
    pub variable: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceReport {
    pub slice: Vec<(String, f64)>,
    /// Verification calls made for the searched parameter.
    pub probes: usize,
    pub breakpoints: usize,
    /// Verdicts at the lowest and highest probed value.
    pub ends: Option<(Status, Status)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct SearchOutcome {
    pub breakpoints: Vec<Breakpoint>,
    pub aborted: Vec<AbortedSlice>,
    pub slices: Vec<SliceReport>,
}

impl SearchOutcome {
    /// CSV rows of outer values followed by the breakpoint value.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if let Some(first) = self.breakpoints.first() {
            let mut header: Vec<&str> = first.slice.iter().map(|(n, _)| n.as_str()).collect();
            header.push(&first.variable);
            out.push_str(&header.join(","));
            out.push('\n');
        }
        for bp in &self.breakpoints {
            let mut row: Vec<String> = bp.slice.iter().map(|(_, v)| v.to_string()).collect();
            row.push(bp.value.to_string());
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Single-verification callable used by the search.
pub trait Verifier: Sync {
    fn verify(&self, script: &DrlpScript, net: &Network) -> Result<VerifyResult, VerifyError>;
}

impl<F> Verifier for F
where
    F: Fn(&DrlpScript, &Network) -> Result<VerifyResult, VerifyError> + Sync,
{
    fn verify(&self, script: &DrlpScript, net: &Network) -> Result<VerifyResult, VerifyError> {
        self(script, net)
    }
}

/// Locate verdict flips of `template` over the parameter ranges in `spec`.
pub fn find_breakpoints(
    template: &DrlpTemplate,
    net: &Network,
    spec: &SearchSpec,
    verifier: &impl Verifier,
) -> Result<SearchOutcome, SearchError> {
    let (last, outer) = spec.vars.split_last().ok_or(SearchError::EmptySpec)?;
    let mut names: Vec<String> = spec.vars.iter().map(|v| v.name.clone()).collect();
    let mut free = template.free_parameters.clone();
    names.sort();
    free.sort();
    if names != free {
        return Err(SearchError::SpecMismatch {
            spec: spec.vars.iter().map(|v| v.name.clone()).collect(),
            template: template.free_parameters.clone(),
        });
    }
    for v in &spec.vars {
        v.validate()?;
    }

    let mut slices: Vec<Vec<(String, f64)>> = vec![Vec::new()];
    for v in outer {
        let lattice = v.lattice();
        slices = slices
            .into_iter()
            .flat_map(|prefix| {
                (0..=lattice.n).map(move |i| {
                    let mut p = prefix.clone();
                    p.push((v.name.clone(), lattice.value(i)));
                    p
                })
            })
            .collect();
    }
    tracing::debug!(slices = slices.len(), variable = %last.name, method = ?last.method, "breakpoint search");

    let results: Vec<Result<SliceResult, SearchError>> = slices
        .into_par_iter()
        .map(|slice| {
            let mut t = template.clone();
            for (name, value) in &slice {
                t = match t.concretize(name, *value)? {
                    Parsed::Template(t) => t,
                    Parsed::Script(_) => unreachable!("the searched parameter is still free"),
                };
            }
            let mut search = SliceSearch {
                template: &t,
                net,
                var: last,
                verifier,
                probes: 0,
                ends: None,
            };
            let found = search.run()?;
            Ok(SliceResult {
                slice,
                probes: search.probes,
                ends: search.ends,
                found,
            })
        })
        .collect();

    let mut outcome = SearchOutcome::default();
    for r in results {
        let r = r?;
        match r.found {
            Found::Breakpoints(bps) => {
                outcome.slices.push(SliceReport {
                    slice: r.slice.clone(),
                    probes: r.probes,
                    breakpoints: bps.len(),
                    ends: r.ends,
                });
                outcome.breakpoints.extend(bps.into_iter().map(|mut bp| {
                    bp.slice = r.slice.clone();
                    bp
                }));
            }
            Found::Unknown(value) => {
                tracing::warn!(?r.slice, value, "probe returned Unknown; slice skipped");
                outcome.slices.push(SliceReport {
                    slice: r.slice.clone(),
                    probes: r.probes,
                    breakpoints: 0,
                    ends: None,
                });
                outcome.aborted.push(AbortedSlice {
                    slice: r.slice,
                    variable: last.name.clone(),
                    value,
                });
            }
        }
    }
    Ok(outcome)
}

struct SliceResult {
    slice: Vec<(String, f64)>,
    probes: usize,
    ends: Option<(Status, Status)>,
    found: Found,
}

enum Found {
    Breakpoints(Vec<Breakpoint>),
    Unknown(f64),
}

/// Early exit from a slice when a probe is inconclusive.
enum Stop {
    Unknown(f64),
    Error(SearchError),
}

impl<E: Into<SearchError>> From<E> for Stop {
    fn from(e: E) -> Self {
        Stop::Error(e.into())
    }
}

struct Probe {
    status: Status,
    witness: Option<Witness>,
}

struct SliceSearch<'a, V: Verifier> {
    template: &'a DrlpTemplate,
    net: &'a Network,
    var: &'a VarSpec,
    verifier: &'a V,
    probes: usize,
    ends: Option<(Status, Status)>,
}

impl<V: Verifier> SliceSearch<'_, V> {
    fn run(&mut self) -> Result<Found, SearchError> {
        let result = match self.var.method {
            SearchMethod::Linear => self.linear(),
            SearchMethod::Binary => self.binary(),
            SearchMethod::Iterative => self.iterative(),
        };
        match result {
            Ok(bps) => Ok(Found::Breakpoints(bps)),
            Err(Stop::Unknown(v)) => Ok(Found::Unknown(v)),
            Err(Stop::Error(e)) => Err(e),
        }
    }

    fn script_at(&self, value: f64) -> Result<DrlpScript, SearchError> {
        Ok(self
            .template
            .concretize(&self.var.name, value)?
            .into_script()?)
    }

    fn probe(&mut self, value: f64) -> Result<Probe, Stop> {
        self.probes += 1;
        let r = self.verifier.verify(&self.script_at(value)?, self.net)?;
        tracing::trace!(variable = %self.var.name, value, status = ?r.status, "probe");
        if r.status == Status::Unknown {
            return Err(Stop::Unknown(value));
        }
        Ok(Probe {
            status: r.status,
            witness: r.witness,
        })
    }

    fn breakpoint(
        &self,
        lo: f64,
        hi: f64,
        flip: (Status, Status),
    ) -> Result<Breakpoint, SearchError> {
        let value = 0.5 * (lo + hi);
        Ok(Breakpoint {
            variable: self.var.name.clone(),
            slice: Vec::new(),
            flip,
            bracket: (lo, hi),
            value,
            script: self.script_at(value)?,
        })
    }

    fn linear(&mut self) -> Result<Vec<Breakpoint>, Stop> {
        let lattice = self.var.lattice();
        let mut out = Vec::new();
        let first = self.probe(lattice.value(0))?.status;
        let mut prev = (lattice.value(0), first);
        for i in 1..=lattice.n {
            let v = lattice.value(i);
            let s = self.probe(v)?.status;
            if prev.1 != s {
                out.push(self.breakpoint(prev.0, v, (prev.1, s))?);
            }
            prev = (v, s);
        }
        self.ends = Some((first, prev.1));
        Ok(out)
    }

    fn binary(&mut self) -> Result<Vec<Breakpoint>, Stop> {
        let lattice = self.var.lattice();
        let s_lo = self.probe(lattice.value(0))?.status;
        let s_hi = if lattice.n == 0 {
            s_lo
        } else {
            self.probe(lattice.value(lattice.n))?.status
        };
        self.ends = Some((s_lo, s_hi));
        if s_lo == s_hi {
            return Ok(Vec::new());
        }
        Ok(vec![self.bisect(&lattice, 0, s_lo, lattice.n, s_hi)?])
    }

    /// Narrow a bracket of lattice indices with differing verdicts to adjacent indices.
    fn bisect(
        &mut self,
        lattice: &Lattice,
        mut lo: usize,
        s_lo: Status,
        mut hi: usize,
        s_hi: Status,
    ) -> Result<Breakpoint, Stop> {
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            let p = self.probe(lattice.value(mid))?;
            let on_low_side = p.status == s_lo;
            let mut next = mid;
            if p.status == Status::Falsified {
                if let Some(w) = &p.witness {
                    next = self.reuse(lattice, w, mid, if on_low_side { hi } else { lo });
                }
            }
            if on_low_side {
                lo = next;
            } else {
                hi = next;
            }
        }
        Ok(self.breakpoint(lattice.value(lo), lattice.value(hi), (s_lo, s_hi))?)
    }

    /// Move a falsified probe at index `mid` toward `toward` as far as its
    /// counterexample stays valid, snapped to a lattice index strictly
    /// between the two.
    fn reuse(&self, lattice: &Lattice, witness: &Witness, mid: usize, toward: usize) -> usize {
        let (from, to) = (lattice.value(mid), lattice.value(toward));
        let reach = self.extend_counterexample(witness, from, to);
        let snapped = if toward > mid {
            lattice.floor(reach).clamp(mid, toward - 1)
        } else {
            lattice.ceil(reach).clamp(toward + 1, mid)
        };
        if snapped != mid && self.is_counterexample(witness, lattice.value(snapped)) {
            snapped
        } else {
            mid
        }
    }

    /// The value nearest to `toward` at which `witness` is still a
    /// counterexample, searched between `from` and `toward`.
    fn extend_counterexample(&self, witness: &Witness, from: f64, toward: f64) -> f64 {
        if !self.is_counterexample(witness, from) {
            return from;
        }
        let (mut good, mut bad) = (from, toward);
        let eps = self.var.precision * 1e-3;
        for _ in 0..REUSE_STEPS {
            if (bad - good).abs() <= eps {
                break;
            }
            let m = 0.5 * (good + bad);
            if self.is_counterexample(witness, m) {
                good = m;
            } else {
                bad = m;
            }
        }
        good
    }

    fn is_counterexample(&self, witness: &Witness, value: f64) -> bool {
        let Ok(script) = self.script_at(value) else {
            return false;
        };
        let Ok(q) = build_query(&script, self.net, witness.x.len()) else {
            return false;
        };
        q.is_counterexample(&q.unrolled.simulate(&witness.x), 0.0)
    }

    /// Offsets from the lower bound grow geometrically until the verdict
    /// changes; the last step is then bisected.
    fn iterative(&mut self) -> Result<Vec<Breakpoint>, Stop> {
        let lattice = self.var.lattice();
        let factor = self.var.iterative_step.expect("validated");
        let s_lb = self.probe(lattice.value(0))?.status;
        let (mut prev, mut offset) = (0usize, 1.0f64);
        while prev < lattice.n {
            let curr = (offset.round() as usize).clamp(prev + 1, lattice.n);
            let s = self.probe(lattice.value(curr))?.status;
            if s != s_lb {
                self.ends = Some((s_lb, s));
                return Ok(vec![self.bisect(&lattice, prev, s_lb, curr, s)?]);
            }
            prev = curr;
            offset *= factor;
        }
        self.ends = Some((s_lb, s_lb));
        Ok(Vec::new())
    }
}

/// Breakpoints of one slice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceSummary {
    pub slice: Vec<(String, f64)>,
    pub count: usize,
    /// Extracted parameter values (bracket midpoints).
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariableSummary {
    pub variable: String,
    pub slices: Vec<SliceSummary>,
    /// Every slice has at most one flip.
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct BreaklineSummary {
    pub variables: Vec<VariableSummary>,
}

impl BreaklineSummary {
    pub fn monotone(&self) -> bool {
        self.variables.iter().all(|v| v.monotone)
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }
}

/// Group breakpoints by variable and slice.
pub fn analyze_breakpoints(bps: &[Breakpoint]) -> BreaklineSummary {
    let mut by_var: BTreeMap<&str, Vec<SliceSummary>> = BTreeMap::new();
    for bp in bps {
        let slices = by_var.entry(&bp.variable).or_default();
        match slices.iter_mut().find(|s| s.slice == bp.slice) {
            Some(s) => {
                s.count += 1;
                s.values.push(bp.value);
            }
            None => slices.push(SliceSummary {
                slice: bp.slice.clone(),
                count: 1,
                values: vec![bp.value],
            }),
        }
    }
    BreaklineSummary {
        variables: by_var
            .into_iter()
            .map(|(variable, slices)| VariableSummary {
                variable: variable.to_string(),
                monotone: slices.iter().all(|s| s.count <= 1),
                slices,
            })
            .collect(),
    }
}
