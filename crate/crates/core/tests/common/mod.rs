#![allow(dead_code)]

use reinverify::drlp::{parse, DrlpScript};
use std::path::PathBuf;

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("corpus")
}

/// All corpus files as `(file name, source)`, sorted by name.
pub fn corpus() -> Vec<(String, String)> {
    let mut out: Vec<_> = std::fs::read_dir(corpus_dir())
        .expect("corpus directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "drlp"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read_to_string(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

pub fn script(src: &str) -> DrlpScript {
    parse(src).expect("parses").into_script().expect("concrete")
}

use rand::Rng;
use reinverify::lp::{LinearProgram, LpOutcome, Sense};
use reinverify::network::{Activation, Layer, Network};

/// Random ReLU network with every width at most 4 and at most `max_relus` hidden neurons.
pub fn random_relu_net<R: Rng>(rng: &mut R, max_relus: usize) -> Network {
    let n = rng.random_range(1..=4);
    let m = rng.random_range(1..=4);
    let mut widths = vec![n];
    let mut budget = max_relus;
    let hidden = rng.random_range(1..=3);
    for _ in 0..hidden {
        if budget == 0 {
            break;
        }
        let w = rng.random_range(1..=budget.min(4));
        budget -= w;
        widths.push(w);
    }
    widths.push(m);
    let layers = widths
        .windows(2)
        .enumerate()
        .map(|(i, d)| {
            let weights = (0..d[1])
                .map(|_| (0..d[0]).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let bias = (0..d[1]).map(|_| rng.random_range(-0.5..0.5)).collect();
            let act = if i + 2 == widths.len() {
                Activation::Identity
            } else {
                Activation::Relu
            };
            Layer::new(weights, bias, act)
        })
        .collect();
    Network::new(layers).unwrap()
}

/// A one-step box property `x ∈ [xl, xu] ⇒ y ∈ [yl, yu]`.
#[derive(Debug, Clone)]
pub struct BoxProperty {
    pub xl: Vec<f64>,
    pub xu: Vec<f64>,
    pub yl: Vec<f64>,
    pub yu: Vec<f64>,
}

impl BoxProperty {
    /// Output box placed around sampled outputs with a random shift, so roughly half the instances fail.
    pub fn random<R: Rng>(rng: &mut R, net: &Network) -> Self {
        let n = net.input_dim();
        let m = net.output_dim();
        let xl: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..0.0)).collect();
        let xu: Vec<f64> = xl.iter().map(|l| l + rng.random_range(0.2..1.5)).collect();
        let mut lo = vec![f64::INFINITY; m];
        let mut hi = vec![f64::NEG_INFINITY; m];
        for _ in 0..200 {
            let x: Vec<f64> = xl
                .iter()
                .zip(&xu)
                .map(|(l, u)| rng.random_range(*l..=*u))
                .collect();
            for (j, v) in net.forward(&x).unwrap().into_iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        let yl = lo
            .iter()
            .zip(&hi)
            .map(|(l, h)| l - (h - l + 0.1) * rng.random_range(-0.05..0.3))
            .collect();
        let yu = lo
            .iter()
            .zip(&hi)
            .map(|(l, h)| h + (h - l + 0.1) * rng.random_range(-0.05..0.3))
            .collect();
        Self { xl, xu, yl, yu }
    }

    pub fn to_drlp(&self) -> String {
        let mut s = format!(
            "@Pre\nx_size = {}\ny_size = {}\n",
            self.xl.len(),
            self.yl.len()
        );
        for (j, (l, u)) in self.xl.iter().zip(&self.xu).enumerate() {
            s += &format!("{l:.12} <= x[0][{j}] <= {u:.12}\n");
        }
        s += "@Exp\n";
        for (j, (l, u)) in self.yl.iter().zip(&self.yu).enumerate() {
            s += &format!("{l:.12} <= y[0][{j}] <= {u:.12}\n");
        }
        s
    }

    /// Does a concrete point satisfy the precondition and violate the postcondition?
    pub fn is_violation(&self, x: &[f64], y: &[f64], tol: f64) -> bool {
        let inside = x
            .iter()
            .zip(self.xl.iter().zip(&self.xu))
            .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol);
        let violated = y
            .iter()
            .zip(self.yl.iter().zip(&self.yu))
            .any(|(v, (l, u))| *v < l + tol || *v > u - tol);
        inside && violated
    }
}

/// Affine function of the network input: `coef · x + c`.
#[derive(Clone)]
struct Affine {
    coef: Vec<f64>,
    c: f64,
}

/// Exact range of every output over the input box, by enumerating every
/// activation pattern and optimising each output with an LP on that region.
pub fn exhaustive_output_range(net: &Network, xl: &[f64], xu: &[f64]) -> Vec<(f64, f64)> {
    let n = net.input_dim();
    let relus: usize = net.relu_count();
    let layers = net.layers();
    let mut range = vec![(f64::INFINITY, f64::NEG_INFINITY); net.output_dim()];
    'pattern: for pattern in 0u64..(1 << relus) {
        let mut rows: Vec<(Vec<f64>, f64, Sense)> = Vec::new();
        let mut cur: Vec<Affine> = (0..n)
            .map(|j| {
                let mut coef = vec![0.0; n];
                coef[j] = 1.0;
                Affine { coef, c: 0.0 }
            })
            .collect();
        let mut bit = 0;
        for layer in layers {
            let z: Vec<Affine> = layer
                .weights
                .iter()
                .zip(&layer.bias)
                .map(|(row, b)| {
                    let mut coef = vec![0.0; n];
                    let mut c = *b;
                    for (w, a) in row.iter().zip(&cur) {
                        for (k, v) in a.coef.iter().enumerate() {
                            coef[k] += w * v;
                        }
                        c += w * a.c;
                    }
                    Affine { coef, c }
                })
                .collect();
            cur = match layer.activation {
                Activation::Relu => z
                    .into_iter()
                    .map(|a| {
                        let active = pattern >> bit & 1 == 1;
                        bit += 1;
                        if active {
                            rows.push((a.coef.clone(), -a.c, Sense::Ge));
                            a
                        } else {
                            rows.push((a.coef.clone(), -a.c, Sense::Le));
                            Affine {
                                coef: vec![0.0; n],
                                c: 0.0,
                            }
                        }
                    })
                    .collect(),
                _ => z,
            };
        }
        for (j, out) in cur.iter().enumerate() {
            for sign in [1.0, -1.0] {
                let mut lp = LinearProgram::new(n);
                for k in 0..n {
                    lp.set_bounds(k, xl[k], xu[k]);
                }
                for (coef, rhs, sense) in &rows {
                    lp.add_row(coef.iter().copied().enumerate().collect(), *sense, *rhs);
                }
                lp.set_objective(out.coef.iter().map(|v| sign * v).collect());
                match lp.solve().unwrap() {
                    LpOutcome::Optimal { objective, .. } => {
                        let v = sign * objective + out.c;
                        if sign > 0.0 {
                            range[j].0 = range[j].0.min(v);
                        } else {
                            range[j].1 = range[j].1.max(v);
                        }
                    }
                    LpOutcome::Infeasible => continue 'pattern,
                    LpOutcome::Unbounded => unreachable!("bounded inputs"),
                }
            }
        }
    }
    range
}

/// Expected verdict from the exact output range: `Some(true)` when safe,
/// `Some(false)` when violated, `None` when too close to call.
pub fn oracle_verdict(net: &Network, prop: &BoxProperty, margin: f64) -> Option<bool> {
    let range = exhaustive_output_range(net, &prop.xl, &prop.xu);
    let mut safe = true;
    for ((lo, hi), (yl, yu)) in range.iter().zip(prop.yl.iter().zip(&prop.yu)) {
        if *lo < yl - margin || *hi > yu + margin {
            return Some(false);
        }
        if *lo < yl + margin || *hi > yu - margin {
            safe = false;
        }
    }
    safe.then_some(true)
}

pub fn relu(weights: Vec<Vec<f64>>, bias: Vec<f64>) -> Layer {
    Layer::new(weights, bias, Activation::Relu)
}

pub fn linear(weights: Vec<Vec<f64>>, bias: Vec<f64>) -> Layer {
    Layer::new(weights, bias, Activation::Identity)
}

/// 1-D drift: the state grows by one each step from zero and must stay at most 1.5.
pub const DRIFT_SCRIPT: &str = "@Pre
x_size = 1
y_size = 1
for i in range(0, k):
    -10 <= x[i][0] <= 10
x[0] == [0]
for i in range(0, k-1):
    x[i+1] == x[i] + y[i]
@Exp
for i in range(0, k):
    x[i] <= [1.5]
";

/// Constant output 1.
pub fn drift_net() -> Network {
    Network::new(vec![linear(vec![vec![0.0]], vec![1.0])]).unwrap()
}

/// The next state is the current state clamped into [0, 1].
pub const CLAMPED_SCRIPT: &str = "@Pre
x_size = 1
y_size = 1
for i in range(0, k):
    -5 <= x[i][0] <= 5
x[0] == [0.5]
for i in range(0, k-1):
    x[i+1] == y[i]
@Exp
for i in range(0, k):
    [0] <= x[i] <= [1]
";

/// `clamp(x, 0, 1) = relu(x) - relu(x - 1)`.
pub fn clamp_net() -> Network {
    Network::new(vec![
        relu(vec![vec![1.0], vec![1.0]], vec![0.0, -1.0]),
        linear(vec![vec![1.0, -1.0]], vec![0.0]),
    ])
    .unwrap()
}

/// Two-feature shift register `(p, q) -> (q, 0)` from the origin; `p <= 1` always
/// holds but an unreachable `q` breaks the one-step inductive argument.
pub const SHIFT_SCRIPT: &str = "@Pre
x_size = 2
y_size = 2
for i in range(0, k):
    [-5]*2 <= x[i] <= [5]*2
x[0] == [0, 0]
for i in range(0, k-1):
    x[i+1] == y[i]
@Exp
for i in range(0, k):
    x[i][0] <= 1
";

pub fn shift_net() -> Network {
    Network::new(vec![linear(
        vec![vec![0.0, 1.0], vec![0.0, 0.0]],
        vec![0.0, 0.0],
    )])
    .unwrap()
}

/// `y = 10 relu(x - 0.5) + 10 relu(0.5 - x) - 5`, minimum -5 at `x = 0.5`.
pub fn gap_net() -> Network {
    Network::new(vec![
        relu(vec![vec![1.0], vec![-1.0]], vec![-0.5, 0.5]),
        linear(vec![vec![10.0, 10.0]], vec![-5.0]),
    ])
    .unwrap()
}
