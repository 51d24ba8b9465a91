use crate::error::{self, CliError};
use crate::{emit, load_drlp, load_net, solver_config, to_json, Ctx, MethodArg};
use reinverify::breakpoint::{
    analyze_breakpoints, find_breakpoints, AbortedSlice, BreaklineSummary, Breakpoint, SearchSpec,
    SliceReport,
};
use reinverify::drlp::{DrlpScript, Parsed};
use reinverify::network::Network;
use reinverify::verify::verify;
use serde::Serialize;
use std::path::PathBuf;

#[derive(clap::Args, Debug)]
pub struct Args {
    /// DRLP template with free parameters.
    template: PathBuf,
    #[arg(long)]
    net: PathBuf,
    /// JSON list of parameter ranges.
    #[arg(long)]
    spec: PathBuf,
    /// Also write breakpoint rows as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MethodArg::Bmc)]
    method: MethodArg,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    k_max: u64,
    #[arg(long)]
    node_budget: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Report<'a> {
    breakpoints: &'a [Breakpoint],
    aborted: &'a [AbortedSlice],
    slices: &'a [SliceReport],
    summary: BreaklineSummary,
}

pub fn run(args: Args, _ctx: &Ctx) -> Result<u8, CliError> {
    let template = match load_drlp(&args.template)? {
        Parsed::Template(t) => t,
        Parsed::Script(_) => {
            return Err(CliError::Usage(format!(
                "{} has no free parameters; use `reinverify verify`",
                args.template.display()
            )))
        }
    };
    let spec: SearchSpec = error::read_json(&args.spec)?;
    for name in &template.free_parameters {
        if !spec.vars.iter().any(|v| &v.name == name) {
            return Err(CliError::Usage(format!(
                "the search spec has no range for free parameter `{name}`"
            )));
        }
    }
    if let Some(v) = spec
        .vars
        .iter()
        .find(|v| !template.free_parameters.contains(&v.name))
    {
        return Err(CliError::Usage(format!(
            "`{}` in the search spec is not a free parameter of the template",
            v.name
        )));
    }
    let net = load_net(&args.net)?;
    let cfg = solver_config(args.node_budget);
    let (k, method) = (args.k_max as usize, args.method.into());
    let verifier = |s: &DrlpScript, n: &Network| verify(s, n, k, method, &cfg);
    let outcome = find_breakpoints(&template, &net, &spec, &verifier)?;
    for s in &outcome.slices {
        eprintln!(
            "slice {:?}: {} probes, {} breakpoints",
            s.slice, s.probes, s.breakpoints
        );
    }
    for a in &outcome.aborted {
        tracing::warn!(variable = %a.variable, value = a.value, "slice aborted on an inconclusive verdict");
    }
    let report = Report {
        breakpoints: &outcome.breakpoints,
        aborted: &outcome.aborted,
        slices: &outcome.slices,
        summary: analyze_breakpoints(&outcome.breakpoints),
    };
    emit(args.out.as_ref(), &to_json(&report))?;
    if let Some(p) = &args.csv {
        error::write(p, &outcome.to_csv())?;
    }
    Ok(0)
}
