//! Interchange JSON: sorted keys, layers in canonical topological order.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{LayerSpec, NetworkGraph};
use crate::genome::HyperparameterTable;
use crate::{Error, Result};

pub const FORMAT_VERSION: &str = "1";

// field order is alphabetical: serde emits struct fields in declaration order
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Wire {
    format_version: String,
    globals: HyperparameterTable,
    inputs: Vec<String>,
    layers: Vec<LayerSpec>,
    outputs: Vec<String>,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: String,
}

/// Canonical bytes. Fails only when the layer graph has a cycle.
pub fn serialize_network(network: &NetworkGraph) -> Result<Vec<u8>> {
    let canonical = network.canonicalized()?;
    let wire = Wire {
        format_version: FORMAT_VERSION.into(),
        globals: canonical.globals,
        inputs: canonical.inputs,
        layers: canonical.layers,
        outputs: canonical.outputs,
    };
    serde_json::to_vec(&wire).map_err(|e| Error::Decode(format!("{e}")))
}

pub fn deserialize_network(bytes: &[u8]) -> Result<NetworkGraph> {
    let probe: VersionProbe = serde_json::from_slice(bytes).map_err(|e| Error::Decode(format!("{e}")))?;
    if probe.format_version != FORMAT_VERSION {
        return Err(Error::FormatVersion(probe.format_version));
    }
    let wire: Wire = serde_json::from_slice(bytes).map_err(|e| Error::Decode(format!("{e}")))?;
    Ok(NetworkGraph {
        layers: wire.layers,
        inputs: wire.inputs,
        outputs: wire.outputs,
        globals: wire.globals,
    })
}
