use crate::error::{self, CliError};
use crate::{emit, load_drlp, load_net, solver_config, to_json, Ctx};
use clap::ValueEnum;
use reinverify::breakpoint::SearchSpec;
use reinverify::drlp::{DrlpTemplate, Parsed};
use reinverify::interpret::{
    counterfactual, decision_boundary, importance, intuitiveness, sensitivity, InterpretError,
    Norm, PerturbationQuestion,
};
use reinverify::network::Network;
use reinverify::verify::SolverConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::PathBuf;

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Question {
    Sensitivity,
    Importance,
    Counterfactual,
    Intuitiveness,
    Boundary,
}

#[derive(clap::Args, Debug)]
pub struct Args {
    #[arg(long, value_enum)]
    question: Question,
    #[arg(long)]
    net: PathBuf,
    /// Question parameters as JSON (sensitivity, importance, counterfactual).
    #[arg(long)]
    query: Option<PathBuf>,
    /// DRLP template (intuitiveness, boundary).
    #[arg(long)]
    template: Option<PathBuf>,
    /// Search spec for the template.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    node_budget: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Deserialize, Debug)]
#[serde(untagged)]
enum Epsilon {
    Uniform(f64),
    PerFeature(Vec<f64>),
}

fn default_precision() -> f64 {
    1e-3
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct Query {
    x_hat: Vec<f64>,
    /// Features allowed to move; all of them when absent.
    discussed: Option<Vec<usize>>,
    epsilon: Option<Epsilon>,
    #[serde(default)]
    norm: Norm,
    y_range: Option<(f64, f64)>,
    eps_range: Option<(f64, f64)>,
    eps_out: Option<f64>,
    target: Option<Vec<f64>>,
    tol: Option<f64>,
    #[serde(default = "default_precision")]
    precision: f64,
}

impl Query {
    fn perturbation(&self) -> PerturbationQuestion {
        let n = self.x_hat.len();
        let epsilon = match &self.epsilon {
            Some(Epsilon::Uniform(e)) => vec![*e; n],
            Some(Epsilon::PerFeature(v)) => v.clone(),
            None => vec![0.0; n],
        };
        PerturbationQuestion {
            x_hat: self.x_hat.clone(),
            discussed: self.discussed.clone().unwrap_or_else(|| (0..n).collect()),
            epsilon,
            norm: self.norm,
        }
    }
}

fn need<T>(v: Option<T>, what: &str, q: Question) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("{q:?} needs `{what}`").to_lowercase()))
}

#[derive(Serialize)]
struct Answer {
    question: Question,
    outcome: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    answer: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    message: Option<String>,
}

pub fn run(args: Args, _ctx: &Ctx) -> Result<u8, CliError> {
    let net = load_net(&args.net)?;
    let cfg = solver_config(args.node_budget);
    let q = args.question;
    let result = match q {
        Question::Sensitivity | Question::Importance | Question::Counterfactual => {
            let query: Query = error::read_json(need(args.query.as_ref(), "--query", q)?)?;
            answer_query(&net, q, &query, &cfg)
        }
        Question::Intuitiveness | Question::Boundary => {
            let template = load_template(args.template.as_ref(), q)?;
            let spec: SearchSpec = error::read_json(need(args.spec.as_ref(), "--spec", q)?)?;
            if q == Question::Boundary {
                let b = decision_boundary(&net, &template, &spec, &cfg)?;
                emit(args.out.as_ref(), &b.to_csv())?;
                return Ok(0);
            }
            intuitiveness(&net, &template, &spec, &cfg).map(|r| to_value(&r))
        }
    };
    let (code, answer) = match result {
        Ok(v) => (
            0,
            Answer {
                question: q,
                outcome: "answered",
                answer: Some(v),
                message: None,
            },
        ),
        Err(e) => {
            let (code, outcome) = match &e {
                InterpretError::NeverChanges => (0, "never_changes"),
                InterpretError::NoBreakpoint => (0, "no_breakpoint"),
                InterpretError::NoCounterfactual => (0, "no_counterfactual"),
                InterpretError::AlreadyApproximate => (0, "already_approximate"),
                InterpretError::Inconclusive { .. } => (2, "inconclusive"),
                _ => return Err(e.into()),
            };
            (
                code,
                Answer {
                    question: q,
                    outcome,
                    answer: None,
                    message: Some(e.to_string()),
                },
            )
        }
    };
    emit(args.out.as_ref(), &to_json(&answer))?;
    Ok(code)
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("answer serialises")
}

fn load_template(path: Option<&PathBuf>, q: Question) -> Result<DrlpTemplate, CliError> {
    let path = need(path, "--template", q)?;
    match load_drlp(path)? {
        Parsed::Template(t) => Ok(t),
        Parsed::Script(_) => Err(CliError::Usage(format!(
            "{} has no free parameters to search",
            path.display()
        ))),
    }
}

fn answer_query(
    net: &Network,
    q: Question,
    query: &Query,
    cfg: &SolverConfig,
) -> Result<Value, InterpretError> {
    let usage = |what: &str| InterpretError::InvalidQuestion(format!("the query needs `{what}`"));
    let p = query.precision;
    match q {
        Question::Sensitivity => {
            if query.epsilon.is_none() {
                return Err(usage("epsilon"));
            }
            sensitivity(net, &query.perturbation(), query.y_range, p, cfg).map(|r| to_value(&r))
        }
        Question::Importance => {
            let range = query.eps_range.ok_or_else(|| usage("eps_range"))?;
            let eps_out = query.eps_out.ok_or_else(|| usage("eps_out"))?;
            importance(net, &query.perturbation(), range, eps_out, p, cfg).map(|r| to_value(&r))
        }
        Question::Counterfactual => {
            let target = query.target.as_ref().ok_or_else(|| usage("target"))?;
            let tol = query.tol.ok_or_else(|| usage("tol"))?;
            let range = query.eps_range.ok_or_else(|| usage("eps_range"))?;
            counterfactual(net, &query.x_hat, target, tol, range, p, query.norm, cfg)
                .map(|r| to_value(&r))
        }
        Question::Intuitiveness | Question::Boundary => unreachable!("template questions"),
    }
}
