use super::{Layer, Network, NetworkError};
use serde::{Deserialize, Serialize};

#[derive(Serialize, Deserialize)]
struct JsonNetwork {
    layers: Vec<Layer>,
}

/// Parse the `{"layers": [{"weights", "bias", "activation"}]}` schema.
pub fn from_json_str(text: &str) -> Result<Network, NetworkError> {
    let parsed: JsonNetwork = serde_json::from_str(text).map_err(|e| NetworkError::Format {
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    Network::new(parsed.layers)
}

pub fn to_json_string(net: &Network) -> String {
    serde_json::to_string_pretty(&JsonNetwork {
        layers: net.layers().to_vec(),
    })
    .expect("network serializes")
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (start + column.saturating_sub(1)).min(text.len())
}
