//! Interpretability questions answered by breakpoint search.
//!
//! Each question is phrased as a DRLP template with one searched parameter,
//! and the answer is read off the breakpoints found for it.

use crate::breakpoint::{
    analyze_breakpoints, find_breakpoints, Breakpoint, SearchError, SearchMethod, SearchOutcome,
    SearchSpec, VarSpec,
};
use crate::drlp::{parse, DrlpError, DrlpScript, DrlpTemplate, Parsed};
use crate::network::{IntervalBox, Network, NetworkError};
use crate::verify::{verify, Method, SolverConfig, Status, VerifyError, VerifyResult};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

/// Largest feature set for which an L1 ball is encoded exactly.
const L1_EXACT_LIMIT: usize = 10;

#[derive(Debug, Error)]
pub enum InterpretError {
    #[error("invalid question: {0}")]
    InvalidQuestion(String),
    #[error("no breakpoint in the searched range")]
    NoBreakpoint,
    #[error("the output never leaves the tolerance band in the searched range")]
    NeverChanges,
    #[error("no counterfactual input in the searched range")]
    NoCounterfactual,
    #[error("the target is already within tolerance of the original output")]
    AlreadyApproximate,
    #[error("verification was inconclusive at `{variable}` = {value}")]
    Inconclusive { variable: String, value: f64 },
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Drlp(#[from] DrlpError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
    #[default]
    Linf,
}

impl Norm {
    pub fn of(self, v: impl IntoIterator<Item = f64>) -> f64 {
        let it = v.into_iter().map(f64::abs);
        match self {
            Norm::L1 => it.sum(),
            Norm::L2 => it.map(|a| a * a).sum::<f64>().sqrt(),
            Norm::Linf => it.fold(0.0, f64::max),
        }
    }

    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        self.of(a.iter().zip(b).map(|(x, y)| x - y))
    }
}

/// An input, the features allowed to move and how far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationQuestion {
    pub x_hat: Vec<f64>,
    /// Features allowed to move; all others stay at `x_hat`.
    pub discussed: Vec<usize>,
    /// Per-feature perturbation radius.
    pub epsilon: Vec<f64>,
    #[serde(default)]
    pub norm: Norm,
}

impl PerturbationQuestion {
    /// Every feature may move by the same `epsilon`.
    pub fn uniform(x_hat: Vec<f64>, discussed: Vec<usize>, epsilon: f64) -> Self {
        let n = x_hat.len();
        Self {
            x_hat,
            discussed,
            epsilon: vec![epsilon; n],
            norm: Norm::Linf,
        }
    }

    pub fn with_norm(mut self, norm: Norm) -> Self {
        self.norm = norm;
        self
    }

    fn validate(&self, net: &Network) -> Result<(), InterpretError> {
        let n = net.input_dim();
        let bad = |m: String| Err(InterpretError::InvalidQuestion(m));
        if self.x_hat.len() != n {
            return bad(format!(
                "x_hat has {} features, the network takes {n}",
                self.x_hat.len()
            ));
        }
        if self.epsilon.len() != n {
            return bad(format!(
                "epsilon has {} entries, expected {n}",
                self.epsilon.len()
            ));
        }
        if self.epsilon.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return bad("epsilon must be finite and non-negative".into());
        }
        let mut seen = vec![false; n];
        for &j in &self.discussed {
            if j >= n || seen[j] {
                return bad(format!("discussed feature {j} is out of range or repeated"));
            }
            seen[j] = true;
        }
        Ok(())
    }

    fn is_discussed(&self, j: usize) -> bool {
        self.discussed.contains(&j)
    }
}

fn template_from(src: &str) -> Result<DrlpTemplate, InterpretError> {
    match parse(src)? {
        Parsed::Template(t) => Ok(t),
        Parsed::Script(_) => unreachable!("generated source has a free parameter"),
    }
}

fn header(net: &Network) -> String {
    format!(
        "@Pre\nx_size = {}\ny_size = {}\n",
        net.input_dim(),
        net.output_dim()
    )
}

/// One-step search with the given verification settings.
fn search(
    template: &DrlpTemplate,
    net: &Network,
    var: VarSpec,
    cfg: &SolverConfig,
) -> Result<SearchOutcome, InterpretError> {
    let verifier = |s: &DrlpScript, n: &Network| verify(s, n, 1, Method::Bmc, cfg);
    let outcome = find_breakpoints(template, net, &SearchSpec::new(vec![var]), &verifier)?;
    inconclusive(&outcome)?;
    Ok(outcome)
}

fn inconclusive(outcome: &SearchOutcome) -> Result<(), InterpretError> {
    match outcome.aborted.first() {
        Some(a) => Err(InterpretError::Inconclusive {
            variable: a.variable.clone(),
            value: a.value,
        }),
        None => Ok(()),
    }
}

/// Largest output deviation from `N(x_hat)` over the perturbation box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sensitivity {
    pub value: f64,
    pub per_output: Vec<f64>,
    pub breakpoints: Vec<Breakpoint>,
}

/// Find the output range over the perturbation box by searching the
/// thresholds `y >= z` and `y <= z`, then report the farther flip from
/// `N(x_hat)`. `y_range` defaults to the interval image inflated by 10%.
pub fn sensitivity(
    net: &Network,
    q: &PerturbationQuestion,
    y_range: Option<(f64, f64)>,
    precision: f64,
    cfg: &SolverConfig,
) -> Result<Sensitivity, InterpretError> {
    q.validate(net)?;
    let m = net.output_dim();
    if q.discussed.is_empty() {
        return Ok(Sensitivity {
            value: 0.0,
            per_output: vec![0.0; m],
            breakpoints: Vec::new(),
        });
    }
    let y_hat = net.forward(&q.x_hat)?;
    let (lower, upper): (Vec<f64>, Vec<f64>) = (0..q.x_hat.len())
        .map(|j| {
            let e = if q.is_discussed(j) { q.epsilon[j] } else { 0.0 };
            (q.x_hat[j] - e, q.x_hat[j] + e)
        })
        .unzip();
    let image = net.interval_propagate(&IntervalBox::new(lower, upper)?)?;

    let mut pre = header(net);
    for (j, x) in q.x_hat.iter().enumerate() {
        if q.is_discussed(j) {
            let e = q.epsilon[j];
            let _ = writeln!(pre, "{} <= x[0][{j}] <= {}", x - e, x + e);
        } else {
            let _ = writeln!(pre, "x[0][{j}] == {x}");
        }
    }

    let mut per_output = Vec::with_capacity(m);
    let mut breakpoints = Vec::new();
    for (j, y) in y_hat.iter().enumerate() {
        let (lo, hi) = y_range.unwrap_or_else(|| {
            let (l, u) = (image.lower[j], image.upper[j]);
            let pad = 0.1 * (u - l).max(1e-6) + precision;
            (l - pad, u + pad)
        });
        let mut flips = Vec::with_capacity(2);
        for op in [">=", "<="] {
            let t = template_from(&format!("{pre}@Exp\ny[0][{j}] {op} z\n"))?;
            let out = search(
                &t,
                net,
                VarSpec::new("z", lo, hi, precision, SearchMethod::Binary),
                cfg,
            )?;
            let bp = out
                .breakpoints
                .into_iter()
                .next()
                .ok_or(InterpretError::NoBreakpoint)?;
            flips.push(bp.value);
            breakpoints.push(bp);
        }
        tracing::debug!(output = j, min = flips[0], max = flips[1], "output range");
        per_output.push(flips.iter().map(|f| (f - y).abs()).fold(0.0, f64::max));
    }
    Ok(Sensitivity {
        value: q.norm.of(per_output.iter().copied()),
        per_output,
        breakpoints,
    })
}

/// Smallest perturbation of the discussed features that moves the output
/// out of the tolerance band.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Importance {
    /// Per-feature radius at the flip.
    pub epsilon: f64,
    /// Norm of the perturbation vector at the flip.
    pub distance: f64,
    /// Reciprocal of `distance`.
    pub score: f64,
    pub breakpoints: Vec<Breakpoint>,
}

/// Search the radius `e` applied to every discussed feature for the first
/// value where `|N(x) - N(x_hat)| <= eps_out` stops holding.
pub fn importance(
    net: &Network,
    q: &PerturbationQuestion,
    eps_range: (f64, f64),
    eps_out: f64,
    precision: f64,
    cfg: &SolverConfig,
) -> Result<Importance, InterpretError> {
    q.validate(net)?;
    if eps_range.0 < 0.0 {
        return Err(InterpretError::InvalidQuestion(
            "eps_range must be non-negative".into(),
        ));
    }
    if q.discussed.is_empty() {
        return Err(InterpretError::NeverChanges);
    }
    let y_hat = net.forward(&q.x_hat)?;
    let mut src = header(net);
    for (j, x) in q.x_hat.iter().enumerate() {
        if q.is_discussed(j) {
            let _ = writeln!(src, "{x} - e <= x[0][{j}] <= {x} + e");
        } else {
            let _ = writeln!(src, "x[0][{j}] == {x}");
        }
    }
    src.push_str("@Exp\n");
    for (j, y) in y_hat.iter().enumerate() {
        let _ = writeln!(src, "{} <= y[0][{j}] <= {}", y - eps_out, y + eps_out);
    }
    let t = template_from(&src)?;
    let var = VarSpec::new(
        "e",
        eps_range.0,
        eps_range.1,
        precision,
        SearchMethod::Binary,
    );
    let out = search(&t, net, var, cfg)?;
    let bp = out
        .breakpoints
        .iter()
        .find(|b| b.flip == (Status::Proven, Status::Falsified))
        .ok_or(InterpretError::NeverChanges)?;
    let epsilon = bp.value;
    let distance = q.norm.of(std::iter::repeat_n(epsilon, q.discussed.len()));
    Ok(Importance {
        epsilon,
        distance,
        score: 1.0 / distance,
        breakpoints: out.breakpoints,
    })
}

/// Importance score of each feature on its own; features that never change
/// the output score 0.
pub fn feature_importance(
    net: &Network,
    x_hat: &[f64],
    eps_range: (f64, f64),
    eps_out: f64,
    precision: f64,
    norm: Norm,
    cfg: &SolverConfig,
) -> Result<Vec<f64>, InterpretError> {
    (0..net.input_dim())
        .map(|j| {
            let q = PerturbationQuestion::uniform(x_hat.to_vec(), vec![j], 0.0).with_norm(norm);
            match importance(net, &q, eps_range, eps_out, precision, cfg) {
                Ok(imp) => Ok(imp.score),
                Err(InterpretError::NeverChanges) => Ok(0.0),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Closest input found whose output is within tolerance of the target.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterfactual {
    pub point: Vec<f64>,
    pub output: Vec<f64>,
    pub distance: f64,
    /// Features that were allowed to move for this answer.
    pub features: Vec<usize>,
    pub breakpoints: Vec<Breakpoint>,
}

/// Search, for each single feature and for all features together, the
/// smallest ball radius around `x_hat` that contains an input `x` with
/// `|N(x) - target| <= tol`; return the closest such input found.
#[allow(clippy::too_many_arguments)]
pub fn counterfactual(
    net: &Network,
    x_hat: &[f64],
    target: &[f64],
    tol: f64,
    eps_range: (f64, f64),
    precision: f64,
    norm: Norm,
    cfg: &SolverConfig,
) -> Result<Counterfactual, InterpretError> {
    let n = net.input_dim();
    if x_hat.len() != n || target.len() != net.output_dim() {
        return Err(InterpretError::InvalidQuestion(
            "x_hat or target has the wrong length".into(),
        ));
    }
    let y_hat = net.forward(x_hat)?;
    if y_hat.iter().zip(target).all(|(y, t)| (y - t).abs() <= tol) {
        return Err(InterpretError::AlreadyApproximate);
    }
    let mut sets: Vec<Vec<usize>> = (0..n).map(|j| vec![j]).collect();
    if n > 1 {
        sets.push((0..n).collect());
    }
    let mut best: Option<Counterfactual> = None;
    for features in sets {
        let src = counterfactual_source(net, x_hat, target, tol, &features, norm);
        let t = template_from(&src)?;
        let var = VarSpec::new(
            "e",
            eps_range.0,
            eps_range.1,
            precision,
            SearchMethod::Binary,
        );
        let out = search(&t, net, var, cfg)?;
        let Some(bp) = out
            .breakpoints
            .iter()
            .find(|b| b.flip == (Status::Proven, Status::Falsified))
        else {
            continue;
        };
        let script = t.concretize("e", bp.bracket.1)?.into_script()?;
        let r: VerifyResult = verify(&script, net, 1, Method::Bmc, cfg)?;
        let Some(w) = r.witness else { continue };
        let point = w.x[0].clone();
        let distance = norm.distance(&point, x_hat);
        tracing::debug!(?features, distance, "counterfactual candidate");
        if best.as_ref().is_none_or(|b| distance < b.distance) {
            best = Some(Counterfactual {
                output: w.y[0].clone(),
                point,
                distance,
                features,
                breakpoints: out.breakpoints,
            });
        }
    }
    best.ok_or(InterpretError::NoCounterfactual)
}

fn counterfactual_source(
    net: &Network,
    x_hat: &[f64],
    target: &[f64],
    tol: f64,
    features: &[usize],
    norm: Norm,
) -> String {
    let mut src = header(net);
    for (j, x) in x_hat.iter().enumerate() {
        if !features.contains(&j) {
            let _ = writeln!(src, "x[0][{j}] == {x}");
        } else if norm != Norm::L1 || features.len() == 1 || features.len() > L1_EXACT_LIMIT {
            let _ = writeln!(src, "{x} - e <= x[0][{j}] <= {x} + e");
        }
    }
    if norm == Norm::L1 && features.len() > 1 && features.len() <= L1_EXACT_LIMIT {
        // Cross-polytope: every signed sum of deviations is at most e.
        for signs in 0u32..(1 << features.len()) {
            let terms: Vec<String> = features
                .iter()
                .enumerate()
                .map(|(i, &j)| {
                    let s = if signs >> i & 1 == 1 { "-" } else { "+" };
                    format!("{s} (x[0][{j}] - {})", x_hat[j])
                })
                .collect();
            let _ = writeln!(src, "0 {} <= e", terms.join(" "));
        }
    }
    src.push_str("@Exp\nwith orange:\n");
    for (j, t) in target.iter().enumerate() {
        let _ = writeln!(src, "    y[0][{j}] < {}", t - tol);
        let _ = writeln!(src, "    y[0][{j}] > {}", t + tol);
    }
    src
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Intuitiveness {
    /// Every slice flips at most once.
    pub intuitive: bool,
    pub breakpoints: Vec<Breakpoint>,
}

/// Check that the verdict flips at most once along the searched parameter.
/// The searched parameter must use linear stepping.
pub fn intuitiveness(
    net: &Network,
    template: &DrlpTemplate,
    spec: &SearchSpec,
    cfg: &SolverConfig,
) -> Result<Intuitiveness, InterpretError> {
    if spec
        .vars
        .last()
        .is_some_and(|v| v.method != SearchMethod::Linear)
    {
        return Err(InterpretError::InvalidQuestion(
            "intuitiveness needs linear stepping on the searched parameter".into(),
        ));
    }
    let verifier = |s: &DrlpScript, n: &Network| verify(s, n, 1, Method::Bmc, cfg);
    let out = find_breakpoints(template, net, spec, &verifier)?;
    inconclusive(&out)?;
    let intuitive = analyze_breakpoints(&out.breakpoints).monotone();
    Ok(Intuitiveness {
        intuitive,
        breakpoints: out.breakpoints,
    })
}

/// Verdicts along one outer slice of a decision boundary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundarySlice {
    pub outer: f64,
    /// Breakpoint value of the inner parameter, if the verdict flips.
    pub inner: Option<f64>,
    /// Verdict at the low end of the inner range.
    pub below: Status,
    /// Verdict at the high end of the inner range.
    pub above: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionBoundary {
    pub outer: String,
    pub inner: String,
    pub points: Vec<(f64, f64)>,
    pub slices: Vec<BoundarySlice>,
}

impl DecisionBoundary {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},{}\n", self.outer, self.inner);
        for (a, b) in &self.points {
            let _ = writeln!(out, "{a},{b}");
        }
        out
    }
}

/// Trace the boundary between holding and failing parameter pairs: the
/// outer parameter is stepped linearly and the inner one searched per slice.
pub fn decision_boundary(
    net: &Network,
    template: &DrlpTemplate,
    spec: &SearchSpec,
    cfg: &SolverConfig,
) -> Result<DecisionBoundary, InterpretError> {
    if spec.vars.len() != 2 || template.free_parameters.len() != 2 {
        return Err(InterpretError::InvalidQuestion(
            "a decision boundary needs exactly two free parameters".into(),
        ));
    }
    let verifier = |s: &DrlpScript, n: &Network| verify(s, n, 1, Method::Bmc, cfg);
    let out = find_breakpoints(template, net, spec, &verifier)?;
    inconclusive(&out)?;
    let (outer, inner) = (spec.vars[0].name.clone(), spec.vars[1].name.clone());
    let mut slices = Vec::with_capacity(out.slices.len());
    for report in &out.slices {
        let outer_value = report.slice[0].1;
        let (below, above) = report.ends.expect("completed slices record their ends");
        let inner_value = out
            .breakpoints
            .iter()
            .find(|b| b.slice == report.slice)
            .map(|b| b.value);
        slices.push(BoundarySlice {
            outer: outer_value,
            inner: inner_value,
            below,
            above,
        });
    }
    let points = slices
        .iter()
        .filter_map(|s| s.inner.map(|b| (s.outer, b)))
        .collect();
    Ok(DecisionBoundary {
        outer,
        inner,
        points,
        slices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, Layer};

    fn net(layers: Vec<Layer>) -> Network {
        Network::new(layers).unwrap()
    }

    fn lin(w: Vec<Vec<f64>>, b: Vec<f64>) -> Layer {
        Layer::new(w, b, Activation::Identity)
    }

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn identity_sensitivity_is_epsilon() {
        let n = net(vec![lin(vec![vec![1.0]], vec![0.0])]);
        let q = PerturbationQuestion::uniform(vec![0.0], vec![0], 0.1);
        let s = sensitivity(&n, &q, None, 1e-3, &cfg()).unwrap();
        assert!((s.value - 0.1).abs() <= 1e-3, "{}", s.value);
        let none = PerturbationQuestion::uniform(vec![0.0], vec![], 0.1);
        assert_eq!(
            sensitivity(&n, &none, None, 1e-3, &cfg()).unwrap().value,
            0.0
        );
    }

    #[test]
    fn scaled_importance() {
        let n = net(vec![lin(vec![vec![10.0]], vec![0.0])]);
        let q = PerturbationQuestion::uniform(vec![0.0], vec![0], 0.0);
        let imp = importance(&n, &q, (0.0, 1.0), 1.0, 1e-3, &cfg()).unwrap();
        assert!((imp.epsilon - 0.1).abs() <= 1e-3, "{}", imp.epsilon);
        assert!((imp.score - 10.0).abs() < 0.2);
        let zero = net(vec![lin(vec![vec![0.0]], vec![0.0])]);
        assert!(matches!(
            importance(&zero, &q, (0.0, 1.0), 1.0, 1e-3, &cfg()),
            Err(InterpretError::NeverChanges)
        ));
    }

    #[test]
    fn dead_feature_has_no_importance() {
        let n = net(vec![lin(vec![vec![2.0, 0.0]], vec![0.0])]);
        let scores =
            feature_importance(&n, &[0.0, 0.0], (0.0, 2.0), 1.0, 1e-3, Norm::Linf, &cfg()).unwrap();
        assert_eq!(scores[1], 0.0);
        assert!(scores[0] > 0.0);
    }

    #[test]
    fn identity_counterfactual() {
        let n = net(vec![lin(vec![vec![1.0]], vec![0.0])]);
        let c =
            counterfactual(&n, &[0.0], &[0.5], 0.01, (0.0, 2.0), 1e-3, Norm::L2, &cfg()).unwrap();
        assert!((c.point[0] - 0.5).abs() <= 0.012, "{:?}", c.point);
        assert!((c.distance - 0.5).abs() <= 0.012);
        assert!(matches!(
            counterfactual(&n, &[0.0], &[0.0], 0.01, (0.0, 2.0), 1e-3, Norm::L2, &cfg()),
            Err(InterpretError::AlreadyApproximate)
        ));
        assert!(matches!(
            counterfactual(&n, &[0.0], &[5.0], 0.01, (0.0, 2.0), 1e-3, Norm::L2, &cfg()),
            Err(InterpretError::NoCounterfactual)
        ));
    }

    #[test]
    fn l1_counterfactual_uses_cross_polytope() {
        let n = net(vec![lin(vec![vec![1.0, 1.0]], vec![0.0])]);
        let c = counterfactual(
            &n,
            &[0.0, 0.0],
            &[1.0],
            0.01,
            (0.0, 3.0),
            1e-3,
            Norm::L1,
            &cfg(),
        )
        .unwrap();
        assert!(c.distance <= 1.0 + 0.01, "{c:?}");
        assert!((c.output[0] - 1.0).abs() <= 0.01 + 1e-6);
    }

    #[test]
    fn intuitiveness_requires_linear() {
        let n = net(vec![lin(vec![vec![1.0]], vec![0.0])]);
        let t =
            template_from("@Pre\nx_size = 1\ny_size = 1\n0 <= x[0][0] <= 1\n@Exp\ny[0][0] >= z\n")
                .unwrap();
        let binary = SearchSpec::new(vec![VarSpec::new(
            "z",
            -1.0,
            1.0,
            0.1,
            SearchMethod::Binary,
        )]);
        assert!(matches!(
            intuitiveness(&n, &t, &binary, &cfg()),
            Err(InterpretError::InvalidQuestion(_))
        ));
        let linear = SearchSpec::new(vec![VarSpec::new(
            "z",
            -1.0,
            1.0,
            0.1,
            SearchMethod::Linear,
        )]);
        let r = intuitiveness(&n, &t, &linear, &cfg()).unwrap();
        assert!(r.intuitive);
        assert_eq!(r.breakpoints.len(), 1);
    }

    #[test]
    fn sum_net_boundary_is_a_line() {
        let n = net(vec![lin(vec![vec![1.0, 1.0]], vec![0.0])]);
        let t = template_from(
            "@Pre\nx_size = 2\ny_size = 1\nx[0][0] >= a\nx[0][1] >= b\n@Exp\ny[0][0] >= 1\n",
        )
        .unwrap();
        let spec = SearchSpec::new(vec![
            VarSpec::new("a", 0.0, 1.0, 0.25, SearchMethod::Linear),
            VarSpec::new("b", -1.0, 2.0, 0.01, SearchMethod::Binary),
        ]);
        let b = decision_boundary(&n, &t, &spec, &cfg()).unwrap();
        assert_eq!(b.points.len(), 5);
        for (a, bv) in &b.points {
            assert!((a + bv - 1.0).abs() <= 0.01, "({a}, {bv})");
        }
        for s in &b.slices {
            assert_eq!((s.below, s.above), (Status::Falsified, Status::Proven));
        }
        assert_eq!(b.to_csv().lines().count(), 6);
    }
}
