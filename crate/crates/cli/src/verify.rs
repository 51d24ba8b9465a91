use crate::error::CliError;
use crate::{emit, load_drlp, load_net, solver_config, to_json, Ctx, MethodArg};
use reinverify::drlp::Parsed;
use reinverify::verify::{verify, Status};
use std::path::PathBuf;

#[derive(clap::Args, Debug)]
pub struct Args {
    /// DRLP property script.
    property: PathBuf,
    /// Network in NNet or JSON format.
    #[arg(long)]
    net: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MethodArg::Kind)]
    method: MethodArg,
    /// Largest unrolling depth.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    k_max: u64,
    /// Branch-and-bound node budget; overrides REINVERIFY_NODE_BUDGET.
    #[arg(long)]
    node_budget: Option<u64>,
    /// Print the parsed script as JSON and stop.
    #[arg(long)]
    emit_ast: bool,
    /// Write the result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(args: Args, ctx: &Ctx) -> Result<u8, CliError> {
    let parsed = load_drlp(&args.property)?;
    if args.emit_ast {
        emit(args.out.as_ref(), &to_json(&parsed))?;
        return Ok(0);
    }
    let script = match parsed {
        Parsed::Script(s) => s,
        Parsed::Template(t) => {
            return Err(CliError::Usage(format!(
            "{} is a template with free parameters {}; use `reinverify search` with a search spec",
            args.property.display(),
            t.free_parameters.join(", ")
        )))
        }
    };
    let net_path = args
        .net
        .ok_or_else(|| CliError::Usage("--net is required unless --emit-ast is given".into()))?;
    let net = load_net(&net_path)?;
    let cfg = solver_config(args.node_budget);
    let mut result = verify(&script, &net, args.k_max as usize, args.method.into(), &cfg)?;
    if ctx.no_timing {
        result.stats.wall_ms = 0;
    }
    tracing::info!(status = ?result.status, depth = result.depth, "verification finished");
    emit(args.out.as_ref(), &to_json(&result))?;
    Ok(match result.status {
        Status::Proven => 0,
        Status::Falsified => 1,
        Status::Unknown => 2,
    })
}
