mod error;
mod interpret;
mod search;
mod shape;
mod verify;

use clap::{Parser, Subcommand, ValueEnum};
use error::{CliError, EXIT_SOFTWARE, EXIT_USAGE};
use reinverify::drlp::{parse, Parsed};
use reinverify::network::Network;
use reinverify::verify::{Method, SolverConfig};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "reinverify", version)]
#[command(about = "Verify, probe and shape rewards for small neural policies with DRLP properties")]
struct Cli {
    /// Worker threads for independent queries.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Seed for randomized steps.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Report zero wall time so repeated runs produce identical output.
    #[arg(long, global = true)]
    no_timing: bool,
    /// Raise log verbosity on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Verify a concrete property.
    Verify(verify::Args),
    /// Search the free parameters of a template for verdict flips.
    Search(search::Args),
    /// Answer an interpretability question.
    Interpret(interpret::Args),
    /// Add property-based shaping terms to a recorded trajectory.
    Shape(shape::Args),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodArg {
    Bmc,
    Kind,
    Interval,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Bmc => Method::Bmc,
            MethodArg::Kind => Method::KInduction,
            MethodArg::Interval => Method::Interval,
        }
    }
}

/// Settings shared by every subcommand.
pub struct Ctx {
    pub no_timing: bool,
    pub seed: u64,
}

pub fn solver_config(node_budget: Option<u64>) -> SolverConfig {
    let cfg = SolverConfig::default();
    match node_budget {
        Some(b) => cfg.with_node_budget(b),
        None => cfg,
    }
}

pub fn load_net(path: &Path) -> Result<Network, CliError> {
    Network::load(path).map_err(|source| CliError::Network {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_drlp(path: &Path) -> Result<Parsed, CliError> {
    parse(&error::read(path)?).map_err(|source| CliError::Drlp {
        path: path.to_path_buf(),
        source,
    })
}

/// Write to `out`, or to stdout when absent.
pub fn emit(out: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => error::write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("output serialises");
    s.push('\n');
    s
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let ctx = Ctx {
        no_timing: cli.no_timing,
        seed: cli.seed,
    };
    match cli.command {
        Command::Verify(a) => verify::run(a, &ctx),
        Command::Search(a) => search::run(a, &ctx),
        Command::Interpret(a) => interpret::run(a, &ctx),
        Command::Shape(a) => shape::run(a, &ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        2 => tracing::Level::DEBUG,
        _ => tracing::Level::TRACE,
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(level)
        .init();

    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.max(1))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return ExitCode::from(EXIT_SOFTWARE);
        }
    };
    match pool.install(|| run(cli)) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
