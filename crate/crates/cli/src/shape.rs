use crate::error::{self, CliError};
use crate::{emit, load_drlp, load_net, solver_config, to_json, Ctx};
use rayon::prelude::*;
use reinverify::drlp::Parsed;
use reinverify::network::Network;
use reinverify::shaping::{
    diff, gap, shape_rewards, suggest_beta, GapSpec, PropertyBox, PropertyMetric, ShapingConfig,
    ShapingProperty, Step,
};
use reinverify::verify::{verify, Method, SolverConfig, Status};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// One DRLP file per property in the config, in the same order.
    #[arg(long, num_args = 1.., required = true)]
    props: Vec<PathBuf>,
    #[arg(long)]
    net: PathBuf,
    /// Trajectory as JSON lines of `{s, a, r}`.
    #[arg(long)]
    traj: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: PathBuf,
    /// Print per-property violation counts and signal statistics.
    #[arg(long)]
    report: bool,
    #[arg(long)]
    node_budget: Option<u64>,
}

#[derive(Deserialize, Debug)]
struct PropertySetup {
    #[serde(rename = "box")]
    property: PropertyBox,
    /// Gap search for a template property.
    gap: Option<GapSpec>,
    /// Fixed gap, skipping verification.
    gap_value: Option<f64>,
}

#[derive(Deserialize, Debug)]
struct ShapeConfig {
    #[serde(flatten)]
    shaping: ShapingConfig,
    properties: Vec<PropertySetup>,
}

#[derive(Serialize)]
struct PropertyReport {
    property: String,
    gap: f64,
    gap_exhausted: bool,
    violations: usize,
    satisfactions: usize,
    diff_min: Option<f64>,
    diff_max: Option<f64>,
    diff_mean: Option<f64>,
}

#[derive(Serialize)]
struct Report {
    steps: usize,
    properties: Vec<PropertyReport>,
    suggested_beta: Option<f64>,
}

fn read_trajectory(path: &Path) -> Result<Vec<Step>, CliError> {
    let text = error::read(path)?;
    let mut steps = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let step: Step = serde_json::from_str(line)
            .map_err(|e| CliError::Data(format!("{} line {}: {e}", path.display(), i + 1)))?;
        steps.push(step);
    }
    Ok(steps)
}

/// Gap of one property and whether its search hit the cap.
fn property_gap(
    path: &Path,
    setup: &PropertySetup,
    net: &Network,
    cfg: &SolverConfig,
) -> Result<(f64, bool), CliError> {
    if let Some(g) = setup.gap_value {
        return Ok((g, false));
    }
    match (load_drlp(path)?, &setup.gap) {
        (Parsed::Template(t), Some(spec)) => {
            let g = gap(&t, net, spec, cfg)?;
            if g.exhausted {
                tracing::warn!(property = %path.display(), cap = g.value, "gap search reached its cap");
            }
            Ok((g.value, g.exhausted))
        }
        (Parsed::Template(t), None) => Err(CliError::Usage(format!(
            "{} is a template over {}; give a `gap` search spec for it",
            path.display(),
            t.free_parameters.join(", ")
        ))),
        (Parsed::Script(s), _) => match verify(&s, net, 1, Method::Bmc, cfg)?.status {
            Status::Proven => Ok((0.0, false)),
            status => Err(CliError::Usage(format!(
                "{} is {status:?} on this network; give a template with a `gap` search spec or a fixed `gap_value`",
                path.display()
            ))),
        },
    }
}

pub fn run(args: Args, _ctx: &Ctx) -> Result<u8, CliError> {
    let config: ShapeConfig = error::read_json(&args.config)?;
    config.shaping.validate()?;
    if config.properties.len() != args.props.len() {
        return Err(CliError::Usage(format!(
            "{} property files given but the config describes {}",
            args.props.len(),
            config.properties.len()
        )));
    }
    let net = load_net(&args.net)?;
    let steps = read_trajectory(&args.traj)?;
    let solver = solver_config(args.node_budget);
    let eps = config.shaping.epsilon;

    let measured: Vec<(ShapingProperty, bool)> = args
        .props
        .par_iter()
        .zip(config.properties.par_iter())
        .map(|(path, setup)| {
            let (g, exhausted) = property_gap(path, setup, &net, &solver)?;
            let metric = PropertyMetric::new(&net, setup.property.clone(), eps)?;
            Ok((ShapingProperty { metric, gap: g }, exhausted))
        })
        .collect::<Result<_, CliError>>()?;
    let props: Vec<ShapingProperty> = measured.iter().map(|(p, _)| p.clone()).collect();

    let shaped = shape_rewards(&steps, &props, &config.shaping)?;
    let mut out = String::new();
    for step in &shaped.steps {
        let _ = writeln!(
            out,
            "{}",
            serde_json::to_string(step).expect("step serialises")
        );
    }
    error::write(&args.out, &out)?;

    if args.report {
        let properties = args
            .props
            .iter()
            .zip(&measured)
            .map(|(path, (p, exhausted))| {
                let mut diffs = Vec::new();
                let (mut violations, mut satisfactions) = (0, 0);
                for st in &steps {
                    if let Some(sat) = p.metric.property.judge(&st.s, &st.a) {
                        if sat {
                            satisfactions += 1;
                        } else {
                            violations += 1;
                        }
                        diffs.push(diff(&p.metric, &st.s, &st.a, sat, &config.shaping));
                    }
                }
                PropertyReport {
                    property: path.display().to_string(),
                    gap: p.gap,
                    gap_exhausted: *exhausted,
                    violations,
                    satisfactions,
                    diff_min: diffs.iter().copied().reduce(f64::min),
                    diff_max: diffs.iter().copied().reduce(f64::max),
                    diff_mean: (!diffs.is_empty())
                        .then(|| diffs.iter().sum::<f64>() / diffs.len() as f64),
                }
            })
            .collect();
        let rewards: Vec<f64> = steps.iter().map(|s| s.r).collect();
        let combined: Vec<f64> = shaped
            .steps
            .iter()
            .map(|s| {
                s.f.iter()
                    .enumerate()
                    .map(|(i, v)| config.shaping.weight(i) * v)
                    .sum()
            })
            .collect();
        let report = Report {
            steps: steps.len(),
            properties,
            suggested_beta: suggest_beta(&rewards, &combined),
        };
        emit(None, &to_json(&report))?;
    }
    Ok(0)
}
