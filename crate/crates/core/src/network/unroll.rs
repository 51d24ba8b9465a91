use super::Network;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IoRole {
    Input,
    Output,
}

/// Position of a flat variable in the unrolled layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VarRole {
    pub step: usize,
    pub role: IoRole,
    pub feature: usize,
}

/// `depth` copies of one network laid out as `[x_0, y_0, x_1, y_1, ...]`.
///
/// Input feature `j` of step `i` has id `i(n+m) + j`; output feature `j` has
/// id `i(n+m) + n + j`. Every copy shares the same network.
#[derive(Debug, Clone, PartialEq)]
pub struct UnrolledNetwork {
    base: Network,
    depth: usize,
}

impl UnrolledNetwork {
    pub fn new(base: Network, depth: usize) -> Self {
        assert!(depth >= 1, "unroll depth must be at least 1");
        Self { base, depth }
    }

    pub fn base(&self) -> &Network {
        &self.base
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn block(&self) -> usize {
        self.base.input_dim() + self.base.output_dim()
    }

    pub fn num_vars(&self) -> usize {
        self.depth * self.block()
    }

    pub fn x_id(&self, step: usize, feature: usize) -> usize {
        debug_assert!(step < self.depth && feature < self.base.input_dim());
        step * self.block() + feature
    }

    pub fn y_id(&self, step: usize, feature: usize) -> usize {
        debug_assert!(step < self.depth && feature < self.base.output_dim());
        step * self.block() + self.base.input_dim() + feature
    }

    pub fn role(&self, id: usize) -> Option<VarRole> {
        if id >= self.num_vars() {
            return None;
        }
        let step = id / self.block();
        let off = id % self.block();
        let n = self.base.input_dim();
        Some(if off < n {
            VarRole {
                step,
                role: IoRole::Input,
                feature: off,
            }
        } else {
            VarRole {
                step,
                role: IoRole::Output,
                feature: off - n,
            }
        })
    }

    /// Flat assignment from per-step inputs, with outputs computed by the network.
    pub fn simulate(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        let mut flat = vec![0.0; self.num_vars()];
        for (i, x) in xs.iter().enumerate().take(self.depth) {
            let y = self.base.forward_unchecked(x);
            for (j, v) in x.iter().enumerate() {
                flat[self.x_id(i, j)] = *v;
            }
            for (j, v) in y.iter().enumerate() {
                flat[self.y_id(i, j)] = *v;
            }
        }
        flat
    }

    /// Split a flat assignment into per-step inputs and outputs.
    pub fn split(&self, flat: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let n = self.base.input_dim();
        let m = self.base.output_dim();
        let xs = (0..self.depth)
            .map(|i| (0..n).map(|j| flat[self.x_id(i, j)]).collect())
            .collect();
        let ys = (0..self.depth)
            .map(|i| (0..m).map(|j| flat[self.y_id(i, j)]).collect())
            .collect();
        (xs, ys)
    }
}
