//! Dense feedforward networks.

mod json;
mod nnet;
mod unroll;

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub use json::{from_json_str, to_json_string};
pub use nnet::{from_nnet_str, to_nnet_string};
pub use unroll::{IoRole, UnrolledNetwork, VarRole};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
        }
    }
}

/// One affine layer followed by an activation. `weights[r]` is the row for output `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weights: Vec<Vec<f64>>, bias: Vec<f64>, activation: Activation) -> Self {
        Self {
            weights,
            bias,
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn out_dim(&self) -> usize {
        self.bias.len()
    }

    /// Pre-activation values `W a + b`.
    pub fn affine(&self, input: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(input).fold(*b, |acc, (w, x)| acc + w * x))
            .collect()
    }
}

/// A validated feedforward network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Network {
    layers: Vec<Layer>,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self, NetworkError> {
        if layers.is_empty() {
            return Err(NetworkError::Dimension("network has no layers".into()));
        }
        for (idx, layer) in layers.iter().enumerate() {
            if layer.weights.len() != layer.bias.len() {
                return Err(NetworkError::Dimension(format!(
                    "layer {idx}: {} weight rows but {} biases",
                    layer.weights.len(),
                    layer.bias.len()
                )));
            }
            if layer.bias.is_empty() {
                return Err(NetworkError::Dimension(format!(
                    "layer {idx} has no outputs"
                )));
            }
            let cols = layer.in_dim();
            if cols == 0 {
                return Err(NetworkError::Dimension(format!(
                    "layer {idx} has no inputs"
                )));
            }
            if let Some(r) = layer.weights.iter().position(|row| row.len() != cols) {
                return Err(NetworkError::Dimension(format!(
                    "layer {idx}: row {r} has {} columns, expected {cols}",
                    layer.weights[r].len()
                )));
            }
            if idx > 0 && layers[idx - 1].out_dim() != cols {
                return Err(NetworkError::Dimension(format!(
                    "layer {idx} expects {cols} inputs but layer {} produces {}",
                    idx - 1,
                    layers[idx - 1].out_dim()
                )));
            }
            let finite = layer
                .weights
                .iter()
                .flatten()
                .chain(&layer.bias)
                .all(|v| v.is_finite());
            if !finite {
                return Err(NetworkError::Dimension(format!(
                    "layer {idx} has non-finite parameters"
                )));
            }
        }
        if layers.last().map(|l| l.activation) != Some(Activation::Identity) {
            return Err(NetworkError::Dimension(
                "final layer activation must be identity".into(),
            ));
        }
        Ok(Self { layers })
    }

    /// Load from an NNet text file, or from JSON when the extension is `.json`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, NetworkError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"))
            || text.trim_start().starts_with('{');
        if is_json {
            from_json_str(&text)
        } else {
            from_nnet_str(&text)
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Layer widths starting with the input dimension.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Layer::out_dim))
            .collect()
    }

    /// True when every activation is ReLU or identity.
    pub fn is_piecewise_linear(&self) -> bool {
        self.layers.iter().all(|l| l.activation != Activation::Tanh)
    }

    pub fn relu_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.activation == Activation::Relu)
            .map(Layer::out_dim)
            .sum()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NetworkError> {
        if x.len() != self.input_dim() {
            return Err(NetworkError::Dimension(format!(
                "input has length {} but the network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for layer in &self.layers {
            cur = layer.affine(&cur);
            for v in &mut cur {
                *v = layer.activation.apply(*v);
            }
        }
        cur
    }

    /// Sound output box for all inputs in `input`.
    pub fn interval_propagate(&self, input: &IntervalBox) -> Result<IntervalBox, NetworkError> {
        if input.dim() != self.input_dim() {
            return Err(NetworkError::Dimension(format!(
                "box has dimension {} but the network expects {}",
                input.dim(),
                self.input_dim()
            )));
        }
        let mut cur = input.clone();
        for layer in &self.layers {
            let pre = affine_interval(layer, &cur);
            cur = IntervalBox {
                lower: pre
                    .lower
                    .iter()
                    .map(|&v| layer.activation.apply(v))
                    .collect(),
                upper: pre
                    .upper
                    .iter()
                    .map(|&v| layer.activation.apply(v))
                    .collect(),
            };
        }
        Ok(cur)
    }

    pub fn unroll(&self, depth: usize) -> UnrolledNetwork {
        UnrolledNetwork::new(self.clone(), depth)
    }

    pub fn to_json(&self) -> String {
        to_json_string(self)
    }
}

/// Interval image of `W a + b`, accumulated in the same order as [`Layer::affine`].
pub(crate) fn affine_interval(layer: &Layer, input: &IntervalBox) -> IntervalBox {
    let mut lower = Vec::with_capacity(layer.out_dim());
    let mut upper = Vec::with_capacity(layer.out_dim());
    for (row, b) in layer.weights.iter().zip(&layer.bias) {
        let (mut lo, mut hi) = (*b, *b);
        for ((w, l), u) in row.iter().zip(&input.lower).zip(&input.upper) {
            if *w == 0.0 {
                continue;
            }
            if *w > 0.0 {
                lo += w * l;
                hi += w * u;
            } else {
                lo += w * u;
                hi += w * l;
            }
        }
        lower.push(if lo.is_nan() { f64::NEG_INFINITY } else { lo });
        upper.push(if hi.is_nan() { f64::INFINITY } else { hi });
    }
    IntervalBox { lower, upper }
}

/// Axis-aligned box `[lower, upper]`. Bounds may be infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl IntervalBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, NetworkError> {
        if lower.len() != upper.len() {
            return Err(NetworkError::Dimension("box bound lengths differ".into()));
        }
        if let Some(j) = (0..lower.len()).find(|&j| !(lower[j] <= upper[j])) {
            return Err(NetworkError::Dimension(format!(
                "box feature {j} has lower {} above upper {}",
                lower[j], upper[j]
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn point(x: &[f64]) -> Self {
        Self {
            lower: x.to_vec(),
            upper: x.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x.iter()
                .enumerate()
                .all(|(j, v)| *v >= self.lower[j] - tol && *v <= self.upper[j] + tol)
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.iter().chain(&self.upper).all(|v| v.is_finite())
    }

    pub fn width(&self, j: usize) -> f64 {
        self.upper[j] - self.lower[j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity(n: usize) -> Network {
        let w = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Network::new(vec![Layer::new(w, vec![0.0; n], Activation::Identity)]).unwrap()
    }

    pub(crate) fn random_relu_net(rng: &mut impl Rng, dims: &[usize]) -> Network {
        let mut layers = Vec::new();
        for w in dims.windows(2) {
            let weights = (0..w[1])
                .map(|_| (0..w[0]).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let bias = (0..w[1]).map(|_| rng.random_range(-0.5..0.5)).collect();
            layers.push(Layer::new(weights, bias, Activation::Relu));
        }
        layers.last_mut().unwrap().activation = Activation::Identity;
        Network::new(layers).unwrap()
    }

    #[test]
    fn identity_forward() {
        let net = identity(2);
        assert_eq!(net.forward(&[0.3, -0.7]).unwrap(), vec![0.3, -0.7]);
    }

    #[test]
    fn hand_computed_forward() {
        let net = Network::new(vec![
            Layer::new(vec![vec![1.0, -1.0]], vec![0.5], Activation::Relu),
            Layer::new(vec![vec![2.0]], vec![0.0], Activation::Identity),
        ])
        .unwrap();
        assert_eq!(net.forward(&[1.0, 0.0]).unwrap(), vec![3.0]);
    }

    #[test]
    fn zero_weights_give_final_bias() {
        let net = Network::new(vec![
            Layer::new(
                vec![vec![0.0, 0.0]; 3],
                vec![1.0, -1.0, 2.0],
                Activation::Relu,
            ),
            Layer::new(vec![vec![0.0; 3]], vec![0.25], Activation::Identity),
        ])
        .unwrap();
        assert_eq!(net.forward(&[5.0, -3.0]).unwrap(), vec![0.25]);
    }

    #[test]
    fn forward_rejects_wrong_length() {
        assert!(matches!(
            identity(2).forward(&[1.0]),
            Err(NetworkError::Dimension(_))
        ));
    }

    #[test]
    fn chain_mismatch_rejected() {
        let err = Network::new(vec![
            Layer::new(vec![vec![1.0, 1.0]], vec![0.0], Activation::Relu),
            Layer::new(vec![vec![1.0, 1.0]], vec![0.0], Activation::Identity),
        ]);
        assert!(matches!(err, Err(NetworkError::Dimension(_))));
    }

    #[test]
    fn final_layer_must_be_identity() {
        let err = Network::new(vec![Layer::new(
            vec![vec![1.0]],
            vec![0.0],
            Activation::Relu,
        )]);
        assert!(matches!(err, Err(NetworkError::Dimension(_))));
    }

    #[test]
    fn interval_identity_and_sum() {
        let b = IntervalBox::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(identity(2).interval_propagate(&b).unwrap(), b);
        let sum = Network::new(vec![Layer::new(
            vec![vec![1.0, 1.0]],
            vec![0.0],
            Activation::Identity,
        )])
        .unwrap();
        let unit = IntervalBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let out = sum.interval_propagate(&unit).unwrap();
        assert_eq!((out.lower[0], out.upper[0]), (0.0, 2.0));
    }

    #[test]
    fn interval_contains_random_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = random_relu_net(&mut rng, &[2, 3, 1]);
        let b = IntervalBox::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let out = net.interval_propagate(&b).unwrap();
        for _ in 0..1000 {
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..=1.0)).collect();
            assert!(out.contains(&net.forward(&x).unwrap(), 0.0));
        }
    }

    #[test]
    fn tanh_flagged() {
        let net = Network::new(vec![
            Layer::new(vec![vec![1.0]], vec![0.0], Activation::Tanh),
            Layer::new(vec![vec![1.0]], vec![0.0], Activation::Identity),
        ])
        .unwrap();
        assert!(!net.is_piecewise_linear());
        assert_eq!(net.relu_count(), 0);
    }

    mod props {
        use super::{random_relu_net, Activation, ChaCha8Rng, IntervalBox, Layer, Network};
        use proptest::prelude::*;
        use rand::{Rng as _, SeedableRng as _};

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]

            #[test]
            fn interval_propagation_is_sound(seed in any::<u64>(), t in prop::collection::vec(0.0f64..=1.0, 3)) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let dims = [3, rng.random_range(1..5), rng.random_range(1..4), 2];
                let net = random_relu_net(&mut rng, &dims);
                let lo: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..1.0)).collect();
                let hi: Vec<f64> = lo.iter().map(|l| l + rng.random_range(0.0..2.0)).collect();
                let x: Vec<f64> = (0..3).map(|j| lo[j] + t[j] * (hi[j] - lo[j])).collect();
                let b = IntervalBox::new(lo, hi).unwrap();
                let out = net.interval_propagate(&b).unwrap();
                let y = net.forward(&x).unwrap();
                prop_assert!(out.contains(&y, 1e-12), "{y:?} not in {out:?}");
            }

            #[test]
            fn identity_layers_compose(seed in any::<u64>(), x in prop::collection::vec(-3.0f64..3.0, 2)) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut net = random_relu_net(&mut rng, &[2, 3, 2]);
                let mut layers = net.layers().to_vec();
                for l in &mut layers {
                    l.activation = Activation::Identity;
                }
                net = Network::new(layers.clone()).unwrap();
                // Compose the two affine maps into one.
                let (a, b) = (&layers[0], &layers[1]);
                let w: Vec<Vec<f64>> = b.weights.iter().map(|row| {
                    (0..2).map(|j| row.iter().zip(&a.weights).map(|(r, ar)| r * ar[j]).sum()).collect()
                }).collect();
                let bias: Vec<f64> = b.weights.iter().zip(&b.bias).map(|(row, bb)| {
                    bb + row.iter().zip(&a.bias).map(|(r, ab)| r * ab).sum::<f64>()
                }).collect();
                let composed = Network::new(vec![Layer::new(w, bias, Activation::Identity)]).unwrap();
                let y1 = net.forward(&x).unwrap();
                let y2 = composed.forward(&x).unwrap();
                for (p, q) in y1.iter().zip(&y2) {
                    prop_assert!((p - q).abs() < 1e-9);
                }
            }
        }
    }
}
