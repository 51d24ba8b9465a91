//! NNet text format.
//!
//! Layout after optional `//` comment lines:
//!
//! ```text
//! numLayers, inputSize, outputSize, maxLayerSize,
//! size_0, size_1, ..., size_numLayers,
//! 0,
//! input minimums (n values),
//! input maximums (n values),
//! means (n + 1 values, the last one for outputs),
//! ranges (n + 1 values, the last one for outputs),
//! then per layer: one line per weight row, then one line per bias.
//! ```
//!
//! Hidden layers are ReLU and the output layer is identity. Input and output
//! normalisation is folded into the first and last layers; the input
//! minimum/maximum clamp is not applied.

use super::{Activation, Layer, Network, NetworkError};
use std::fmt::Write as _;

struct Line<'a> {
    offset: usize,
    text: &'a str,
}

fn format_err(offset: usize, message: impl Into<String>) -> NetworkError {
    NetworkError::Format {
        offset,
        message: message.into(),
    }
}

/// Numbers on one line with their byte offsets.
fn numbers(line: &Line<'_>) -> Result<Vec<(usize, f64)>, NetworkError> {
    let mut out = Vec::new();
    let mut pos = 0;
    for piece in line.text.split(',') {
        let start = pos + (piece.len() - piece.trim_start().len());
        pos += piece.len() + 1;
        let tok = piece.trim();
        if tok.is_empty() {
            continue;
        }
        let v: f64 = tok.parse().map_err(|_| {
            format_err(
                line.offset + start,
                format!("expected a number, found `{tok}`"),
            )
        })?;
        out.push((line.offset + start, v));
    }
    Ok(out)
}

pub fn from_nnet_str(text: &str) -> Result<Network, NetworkError> {
    let mut lines = Vec::new();
    let mut offset = 0;
    for raw in text.split_inclusive('\n') {
        let body = raw.trim_end_matches(['\n', '\r']);
        if !body.trim().is_empty() && !body.trim_start().starts_with("//") {
            lines.push(Line { offset, text: body });
        }
        offset += raw.len();
    }
    let mut cursor = 0;
    let mut next_line = |what: &str| -> Result<&Line<'_>, NetworkError> {
        let l = lines.get(cursor).ok_or_else(|| {
            format_err(
                text.len(),
                format!("unexpected end of file, expected {what}"),
            )
        })?;
        cursor += 1;
        Ok(l)
    };

    let header_line = next_line("header")?;
    let header = numbers(header_line)?;
    if header.len() < 3 {
        return Err(format_err(
            header_line.offset,
            "header needs numLayers, inputSize, outputSize",
        ));
    }
    let as_count = |(off, v): (usize, f64)| -> Result<usize, NetworkError> {
        if v >= 1.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(format_err(
                off,
                format!("expected a positive integer, found {v}"),
            ))
        }
    };
    let n_layers = as_count(header[0])?;
    let n_in = as_count(header[1])?;
    let n_out = as_count(header[2])?;

    let sizes_line = next_line("layer sizes")?;
    let sizes = numbers(sizes_line)?;
    if sizes.len() != n_layers + 1 {
        return Err(format_err(
            sizes_line.offset,
            format!(
                "expected {} layer sizes, found {}",
                n_layers + 1,
                sizes.len()
            ),
        ));
    }
    let sizes: Vec<usize> = sizes.into_iter().map(as_count).collect::<Result<_, _>>()?;
    if sizes[0] != n_in || sizes[n_layers] != n_out {
        return Err(NetworkError::Dimension(format!(
            "layer sizes {sizes:?} disagree with input size {n_in} and output size {n_out}"
        )));
    }

    let _symmetric = next_line("symmetric flag")?;
    let mut vector = |len: usize, what: &str| -> Result<Vec<f64>, NetworkError> {
        let l = next_line(what)?;
        let vals = numbers(l)?;
        if vals.len() != len {
            return Err(format_err(
                l.offset,
                format!("expected {len} {what}, found {}", vals.len()),
            ));
        }
        Ok(vals.into_iter().map(|(_, v)| v).collect())
    };
    let _mins = vector(n_in, "input minimums")?;
    let _maxs = vector(n_in, "input maximums")?;
    let means = vector(n_in + 1, "means")?;
    let ranges = vector(n_in + 1, "ranges")?;
    if let Some(r) = ranges.iter().find(|r| **r == 0.0) {
        return Err(format_err(
            0,
            format!("normalisation range {r} must be nonzero"),
        ));
    }

    let mut layers = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let (cols, rows) = (sizes[l], sizes[l + 1]);
        let mut weights = Vec::with_capacity(rows);
        for r in 0..rows {
            let line = next_line("weight row")?;
            let vals = numbers(line)?;
            if vals.len() != cols {
                return Err(NetworkError::Dimension(format!(
                    "layer {l} weight row {r} (byte {}) has {} columns, expected {cols}",
                    line.offset,
                    vals.len()
                )));
            }
            weights.push(vals.into_iter().map(|(_, v)| v).collect());
        }
        let mut bias = Vec::with_capacity(rows);
        for _ in 0..rows {
            let line = next_line("bias")?;
            let vals = numbers(line)?;
            if vals.len() != 1 {
                return Err(format_err(
                    line.offset,
                    format!("expected one bias value, found {}", vals.len()),
                ));
            }
            bias.push(vals[0].1);
        }
        let activation = if l + 1 == n_layers {
            Activation::Identity
        } else {
            Activation::Relu
        };
        layers.push(Layer::new(weights, bias, activation));
    }
    if let Some(extra) = lines.get(cursor) {
        return Err(format_err(
            extra.offset,
            "trailing data after the last layer",
        ));
    }

    // Fold normalisation: x_norm = (x - mean) / range, y = y_norm * range_out + mean_out.
    let first = &mut layers[0];
    for (row, b) in first.weights.iter_mut().zip(first.bias.iter_mut()) {
        for (j, w) in row.iter_mut().enumerate() {
            *w /= ranges[j];
            *b -= *w * means[j];
        }
    }
    let (mu_out, r_out) = (means[n_in], ranges[n_in]);
    let last = layers.last_mut().expect("at least one layer");
    for (row, b) in last.weights.iter_mut().zip(last.bias.iter_mut()) {
        for w in row.iter_mut() {
            *w *= r_out;
        }
        *b = *b * r_out + mu_out;
    }
    Network::new(layers)
}

/// Write a network as NNet with identity normalisation. Requires ReLU hidden layers.
pub fn to_nnet_string(net: &Network) -> Result<String, NetworkError> {
    let layers = net.layers();
    if layers[..layers.len() - 1]
        .iter()
        .any(|l| l.activation != Activation::Relu)
    {
        return Err(NetworkError::Dimension(
            "NNet can only store ReLU hidden layers".into(),
        ));
    }
    let dims = net.dims();
    let n = net.input_dim();
    let join = |vals: &mut dyn Iterator<Item = String>| vals.map(|v| v + ",").collect::<String>();
    let mut s = String::new();
    let _ = writeln!(s, "// reinverify network");
    let max = dims.iter().copied().max().unwrap_or(0);
    let _ = writeln!(s, "{},{},{},{},", layers.len(), n, net.output_dim(), max);
    let _ = writeln!(s, "{}", join(&mut dims.iter().map(|d| d.to_string())));
    let _ = writeln!(s, "0,");
    let _ = writeln!(s, "{}", join(&mut (0..n).map(|_| "-1e30".to_string())));
    let _ = writeln!(s, "{}", join(&mut (0..n).map(|_| "1e30".to_string())));
    let _ = writeln!(s, "{}", join(&mut (0..=n).map(|_| "0".to_string())));
    let _ = writeln!(s, "{}", join(&mut (0..=n).map(|_| "1".to_string())));
    for layer in layers {
        for row in &layer.weights {
            let _ = writeln!(s, "{}", join(&mut row.iter().map(|v| format!("{v:?}"))));
        }
        for b in &layer.bias {
            let _ = writeln!(s, "{b:?},");
        }
    }
    Ok(s)
}
