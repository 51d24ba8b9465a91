use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

const IDENTITY: &str = r#"{"layers":[{"weights":[[1.0]],"bias":[0.0],"activation":"identity"}]}"#;
const ZERO: &str = r#"{"layers":[{"weights":[[0.0]],"bias":[0.0],"activation":"identity"}]}"#;
const SUM2: &str = r#"{"layers":[{"weights":[[1.0,1.0]],"bias":[0.0],"activation":"identity"}]}"#;

const SAFE: &str = "@Pre\nx_size = 1\ny_size = 1\n0 <= x[0][0] <= 1\n@Exp\ny[0][0] <= 1\n";
const UNSAFE: &str = "@Pre\nx_size = 1\ny_size = 1\n0 <= x[0][0] <= 1\n@Exp\ny[0][0] <= 0.5\n";
const THRESHOLD: &str = "@Pre\nx_size = 1\ny_size = 1\n0 <= x[0][0] <= 1\n@Exp\ny[0][0] >= z\n";

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Self {
            dir: TempDir::new().unwrap(),
        }
    }

    fn file(&self, name: &str, text: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn run(args: &[&Path]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reinverify"))
        .args(args)
        .output()
        .unwrap()
}

fn p(s: &str) -> &Path {
    Path::new(s)
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("bad json ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn verify_proven_exits_zero() {
    let f = Fixture::new();
    let net = f.file("id.json", IDENTITY);
    let prop = f.file("safe.drlp", SAFE);
    let out = run(&[p("verify"), &prop, p("--net"), &net]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["status"], "Proven");
    assert!(v["witness"].is_null());
    assert!(v["stats"]["nodes"].is_u64());
}

#[test]
fn verify_falsified_reports_witness() {
    let f = Fixture::new();
    let net = f.file("id.json", IDENTITY);
    let prop = f.file("unsafe.drlp", UNSAFE);
    let out = run(&[
        p("verify"),
        &prop,
        p("--net"),
        &net,
        p("--method"),
        p("bmc"),
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["status"], "Falsified");
    let y = v["witness"]["y"][0][0].as_f64().unwrap();
    assert!(y > 0.5);
}

#[test]
fn verify_rejects_template() {
    let f = Fixture::new();
    let net = f.file("id.json", IDENTITY);
    let prop = f.file("t.drlp", THRESHOLD);
    let out = run(&[p("verify"), &prop, p("--net"), &net]);
    assert_eq!(out.status.code(), Some(64));
    assert!(stderr(&out).contains("search"));
}

#[test]
fn verify_emits_ast() {
    let f = Fixture::new();
    let prop = f.file("t.drlp", THRESHOLD);
    let out = run(&[p("verify"), &prop, p("--emit-ast")]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["kind"], "template");
    assert_eq!(v["free_parameters"][0], "z");
}

#[test]
fn bad_arguments_are_usage_errors() {
    let f = Fixture::new();
    let prop = f.file("safe.drlp", SAFE);
    let out = run(&[p("verify"), &prop, p("--method"), p("magic")]);
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn parse_error_exits_above_two() {
    let f = Fixture::new();
    let net = f.file("id.json", IDENTITY);
    let prop = f.file("bad.drlp", "@Pre\nx[0][0] <=\n@Exp\ny[0][0] > 0\n");
    let out = run(&[p("verify"), &prop, p("--net"), &net]);
    assert!(out.status.code().unwrap() > 2);
    assert!(stderr(&out).contains("bad.drlp"));
}

#[test]
fn node_budget_env_forces_unknown() {
    let f = Fixture::new();
    let net = f.file(
        "relu.json",
        r#"{"layers":[{"weights":[[1.0],[-1.0]],"bias":[0.0,0.0],"activation":"relu"},
            {"weights":[[1.0,1.0]],"bias":[0.0],"activation":"identity"}]}"#,
    );
    let prop = f.file(
        "abs.drlp",
        "@Pre\nx_size = 1\ny_size = 1\n-1 <= x[0][0] <= 1\n@Exp\ny[0][0] <= 0.5\n",
    );
    let out = Command::new(env!("CARGO_BIN_EXE_reinverify"))
        .args([
            p("verify"),
            &prop,
            p("--net"),
            &net,
            p("--method"),
            p("bmc"),
        ])
        .env("REINVERIFY_NODE_BUDGET", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert_eq!(json(&out)["status"], "Unknown");
}

#[test]
fn search_threshold_template() {
    let f = Fixture::new();
    let net = f.file("id.json", IDENTITY);
    let t = f.file("t.drlp", THRESHOLD);
    let spec = f.file(
        "spec.json",
        r#"[{"name":"z","lower_bound":-1,"upper_bound":1,"precision":0.01,"method":"binary"}]"#,
    );
    let csv = f.path("bp.csv");
    let out = run(&[
        p("search"),
        &t,
        p("--net"),
        &net,
        p("--spec"),
        &spec,
        p("--csv"),
        &csv,
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    let bps = v["breakpoints"].as_array().unwrap();
    assert_eq!(bps.len(), 1);
    let value = bps[0]["value"].as_f64().unwrap();
    assert!(value.abs() <= 0.01, "{value}");
    assert!(bps[0]["script"].as_str().unwrap().contains("@Exp"));
    let rows = std::fs::read_to_string(csv).unwrap();
    assert_eq!(rows.lines().count(), 2);
    assert_eq!(rows.lines().next(), Some("z"));
}

#[test]
fn search_all_proven_is_empty_and_monotone() {
    let f = Fixture::new();
    let net = f.file("id.json", IDENTITY);
    let t = f.file("t.drlp", THRESHOLD);
    let spec = f.file(
        "spec.json",
        r#"[{"name":"z","lower_bound":-3,"upper_bound":-1,"precision":0.1,"method":"linear"}]"#,
    );
    let out = run(&[p("search"), &t, p("--net"), &net, p("--spec"), &spec]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    assert!(v["breakpoints"].as_array().unwrap().is_empty());
    assert!(v["summary"]["variables"].as_array().unwrap().is_empty());
}

#[test]
fn search_missing_range_names_variable() {
    let f = Fixture::new();
    let net = f.file("id.json", IDENTITY);
    let t = f.file("t.drlp", THRESHOLD);
    let spec = f.file(
        "spec.json",
        r#"[{"name":"w","lower_bound":-1,"upper_bound":1,"precision":0.1,"method":"binary"}]"#,
    );
    let out = run(&[p("search"), &t, p("--net"), &net, p("--spec"), &spec]);
    assert_eq!(out.status.code(), Some(64));
    assert!(stderr(&out).contains("`z`"), "{}", stderr(&out));
}

#[test]
fn interpret_sensitivity_identity() {
    let f = Fixture::new();
    let net = f.file("id.json", IDENTITY);
    let q = f.file(
        "q.json",
        r#"{"x_hat":[0.5],"epsilon":0.1,"precision":0.001}"#,
    );
    let out = run(&[
        p("interpret"),
        p("--question"),
        p("sensitivity"),
        p("--net"),
        &net,
        p("--query"),
        &q,
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    let s = v["answer"]["value"].as_f64().unwrap();
    assert!((s - 0.1).abs() <= 0.002, "{s}");
}

#[test]
fn interpret_importance_zero_net_never_changes() {
    let f = Fixture::new();
    let net = f.file("zero.json", ZERO);
    let q = f.file(
        "q.json",
        r#"{"x_hat":[0.5],"eps_range":[0,2],"eps_out":0.1,"precision":0.01}"#,
    );
    let out = run(&[
        p("interpret"),
        p("--question"),
        p("importance"),
        p("--net"),
        &net,
        p("--query"),
        &q,
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(json(&out)["outcome"], "never_changes");
}

#[test]
fn interpret_boundary_csv() {
    let f = Fixture::new();
    let net = f.file("sum.json", SUM2);
    let t = f.file(
        "b.drlp",
        "@Pre\nx_size = 2\ny_size = 1\nx[0][0] == a\nx[0][1] == b\n@Exp\ny[0][0] <= 1\n",
    );
    let spec = f.file(
        "spec.json",
        r#"[{"name":"a","lower_bound":0,"upper_bound":1,"precision":0.5,"method":"linear"},
            {"name":"b","lower_bound":-1,"upper_bound":2,"precision":0.01,"method":"binary"}]"#,
    );
    let out = run(&[
        p("interpret"),
        p("--question"),
        p("boundary"),
        p("--net"),
        &net,
        p("--template"),
        &t,
        p("--spec"),
        &spec,
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("a,b"));
    let points: Vec<(f64, f64)> = lines
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert_eq!(points.len(), 3);
    for (a, b) in points {
        assert!((a + b - 1.0).abs() <= 0.01, "{a},{b}");
    }
}

const SHAPE_CFG: &str = r#"{
  "beta": 1.0, "gamma": 0.9, "mu": 0.0,
  "lr": {"type": "constant", "value": 1.0},
  "properties": [{
    "box": {"state_lower":[0.0],"state_upper":[2.0],"action":{"avoid":[0]},
            "env_lower":[-1.0],"env_upper":[3.0],"kind":"single-step"},
    "gap_value": 0.0
  }]
}"#;

const TRAJ: &str = r#"{"s":[1.0],"a":0,"r":1.0}
{"s":[0.5],"a":1,"r":-2.0}
{"s":[2.5],"a":0,"r":0.5}
"#;

fn shape(f: &Fixture, cfg: &str, traj: &str, extra: &[&Path]) -> (Output, Vec<Value>) {
    let net = f.file("id.json", IDENTITY);
    let prop = f.file("p.drlp", SAFE);
    let cfg = f.file("cfg.json", cfg);
    let traj = f.file("in.jsonl", traj);
    let out_path = f.path("out.jsonl");
    let mut args = vec![
        p("shape"),
        p("--props"),
        &prop,
        p("--net"),
        &net,
        p("--traj"),
        &traj,
        p("--out"),
        &out_path,
        p("--config"),
        &cfg,
    ];
    args.extend_from_slice(extra);
    let out = run(&args);
    let lines = std::fs::read_to_string(&out_path)
        .map(|t| {
            t.lines()
                .map(|l| serde_json::from_str(l).unwrap())
                .collect()
        })
        .unwrap_or_default();
    (out, lines)
}

#[test]
fn shape_single_step_pipeline() {
    let f = Fixture::new();
    let (out, lines) = shape(&f, SHAPE_CFG, TRAJ, &[p("--report")]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let shaped: Vec<f64> = lines
        .iter()
        .map(|l| l["r_shaped"].as_f64().unwrap())
        .collect();
    // Identity densities are equal on both sides, so the middle is 1.
    let expected = [1.0 - 1.0, -2.0 + 0.5, 0.5];
    for (a, b) in shaped.iter().zip(expected) {
        assert!((a - b).abs() < 1e-12, "{shaped:?}");
    }
    assert!((lines[0]["F"][0].as_f64().unwrap() + 1.0).abs() < 1e-12);
    let report = json(&out);
    assert_eq!(report["properties"][0]["violations"], 1);
    assert_eq!(report["properties"][0]["satisfactions"], 1);
}

#[test]
fn shape_zero_beta_keeps_rewards() {
    let f = Fixture::new();
    let cfg = SHAPE_CFG.replace("\"beta\": 1.0", "\"beta\": 0.0");
    let (out, lines) = shape(&f, &cfg, TRAJ, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let input: Vec<Value> = TRAJ
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    for (o, i) in lines.iter().zip(&input) {
        assert_eq!(o["r_shaped"], i["r"]);
    }
}

#[test]
fn shape_states_outside_box_unchanged() {
    let f = Fixture::new();
    let traj = "{\"s\":[2.5],\"a\":0,\"r\":1.0}\n{\"s\":[-0.5],\"a\":0,\"r\":2.0}\n";
    let (out, lines) = shape(&f, SHAPE_CFG, traj, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(lines[0]["r_shaped"], 1.0);
    assert_eq!(lines[1]["r_shaped"], 2.0);
}

#[test]
fn shape_schema_error_names_line() {
    let f = Fixture::new();
    let traj = "{\"s\":[1.0],\"a\":0,\"r\":1.0}\n{\"s\":[1.0],\"r\":1.0}\n";
    let (out, _) = shape(&f, SHAPE_CFG, traj, &[]);
    assert_eq!(out.status.code(), Some(65));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}

#[test]
fn repeated_runs_are_identical() {
    let f = Fixture::new();
    let net = f.file("id.json", IDENTITY);
    let prop = f.file("unsafe.drlp", UNSAFE);
    let args = [
        p("verify"),
        &prop,
        p("--net"),
        &net,
        p("--no-timing"),
        p("--seed"),
        p("7"),
    ];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(1));
    assert_eq!(a.stdout, b.stdout);
}
