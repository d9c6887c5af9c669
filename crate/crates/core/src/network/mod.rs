//! Assembled-network intermediate representation.
//!
//! A [`NetworkGraph`] is a typed layer DAG. Layers name their inbound layers
//! by id; any layer with more than one inbound must be a `concat_merge`.
//! Shapes exclude the batch dimension and the last dimension is always the
//! feature (channel) axis. Convolutions use same padding and stride 1, so
//! only pooling changes spatial/temporal extents.

mod count;
mod json;
mod shape;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::genome::HyperparameterTable;
use crate::{Error, Result};

pub use count::{count_parameters, layer_parameters};
pub use json::{deserialize_network, serialize_network, FORMAT_VERSION};
pub use shape::{infer_shapes, DimRole, TensorShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Conv1d,
    Conv2d,
    Dense,
    Lstm,
    Gru,
    Dropout,
    MaxPool,
    Flatten,
    ConcatMerge,
    Input,
    Output,
}

impl OpKind {
    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "conv1d" => OpKind::Conv1d,
            "conv2d" => OpKind::Conv2d,
            "dense" => OpKind::Dense,
            "lstm" => OpKind::Lstm,
            "gru" => OpKind::Gru,
            "dropout" => OpKind::Dropout,
            "max_pool" => OpKind::MaxPool,
            "flatten" => OpKind::Flatten,
            "concat_merge" => OpKind::ConcatMerge,
            "input" => OpKind::Input,
            "output" => OpKind::Output,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Conv1d => "conv1d",
            OpKind::Conv2d => "conv2d",
            OpKind::Dense => "dense",
            OpKind::Lstm => "lstm",
            OpKind::Gru => "gru",
            OpKind::Dropout => "dropout",
            OpKind::MaxPool => "max_pool",
            OpKind::Flatten => "flatten",
            OpKind::ConcatMerge => "concat_merge",
            OpKind::Input => "input",
            OpKind::Output => "output",
        }
    }

    /// Layers that hold trainable weights.
    pub fn is_weighted(self) -> bool {
        matches!(
            self,
            OpKind::Conv1d | OpKind::Conv2d | OpKind::Dense | OpKind::Lstm | OpKind::Gru | OpKind::Output
        )
    }

    /// Layers a module node can turn into.
    pub fn is_module_layer(self) -> bool {
        matches!(
            self,
            OpKind::Conv1d | OpKind::Conv2d | OpKind::Dense | OpKind::Lstm | OpKind::Gru | OpKind::Dropout
        )
    }

    /// The attribute holding the layer width, if any.
    pub fn width_attr(self) -> Option<&'static str> {
        match self {
            OpKind::Conv1d | OpKind::Conv2d => Some(attr::FILTERS),
            OpKind::Dense | OpKind::Lstm | OpKind::Gru | OpKind::Output => Some(attr::UNITS),
            _ => None,
        }
    }
}

/// Attribute names used by the IR.
pub mod attr {
    pub const FILTERS: &str = "filters";
    pub const UNITS: &str = "units";
    pub const KERNEL_SIZE: &str = "kernel_size";
    pub const ACTIVATION: &str = "activation";
    pub const INITIALIZER: &str = "initializer";
    pub const RATE: &str = "rate";
    pub const POOL_SIZE: &str = "pool_size";
    pub const SHAPE: &str = "shape";
    pub const WEIGHT_DECAY: &str = "weight_decay";
    /// Layers with the same key (and block shape) share weights when the
    /// network's `weight_sharing` global is set.
    pub const SHARE_KEY: &str = "share_key";

    pub const ACTIVATIONS: [&str; 4] = ["relu", "linear", "elu", "selu"];
    pub const INITIALIZERS: [&str; 2] = ["glorot", "he"];
}

/// Global flag consulted by parameter counting.
pub const WEIGHT_SHARING_GLOBAL: &str = "weight_sharing";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Bool(bool),
    Int(i64),
    Real(f64),
    Text(String),
    IntList(Vec<i64>),
}

impl AttrValue {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            AttrValue::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_real(&self) -> Option<f64> {
        match self {
            AttrValue::Real(v) => Some(*v),
            AttrValue::Int(v) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            AttrValue::Text(s) => Some(s),
            _ => None,
        }
    }
}

/// One layer. Field order is alphabetical so the serialized keys are sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub attrs: BTreeMap<String, AttrValue>,
    pub id: String,
    pub inbound: Vec<String>,
    pub op_kind: OpKind,
}

impl LayerSpec {
    pub fn new(id: impl Into<String>, op_kind: OpKind) -> Self {
        Self {
            attrs: BTreeMap::new(),
            id: id.into(),
            inbound: Vec::new(),
            op_kind,
        }
    }

    pub fn with_attr(mut self, key: &str, value: AttrValue) -> Self {
        self.attrs.insert(key.into(), value);
        self
    }

    pub fn with_inbound<S: AsRef<str>>(mut self, inbound: &[S]) -> Self {
        self.inbound = inbound.iter().map(|s| String::from(s.as_ref())).collect();
        self
    }

    pub fn int_attr(&self, key: &str) -> Option<i64> {
        self.attrs.get(key).and_then(AttrValue::as_int)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NetworkGraph {
    pub layers: Vec<LayerSpec>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub globals: HyperparameterTable,
}

/// A single problem found by [`validate_dag`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DuplicateLayer(String),
    UnknownLayer(String),
    UnknownInbound {
        layer: String,
        inbound: String,
    },
    Cycle(Vec<String>),
    Unreachable(String),
    DeadEnd(String),
    InputHasInbound(String),
    OutputHasConsumers(String),
    MissingInbound(String),
    UnmergedInbound(String),
    MissingAttr {
        layer: String,
        attr: &'static str,
    },
    InvalidAttr {
        layer: String,
        attr: &'static str,
    },
    RankMismatch {
        layer: String,
        expected: &'static str,
        found: usize,
    },
    ShapeConflict {
        layer: String,
        detail: String,
    },
}

impl Violation {
    pub fn layer(&self) -> Option<&str> {
        match self {
            Violation::Cycle(ids) => ids.first().map(String::as_str),
            Violation::DuplicateLayer(l)
            | Violation::UnknownLayer(l)
            | Violation::Unreachable(l)
            | Violation::DeadEnd(l)
            | Violation::InputHasInbound(l)
            | Violation::OutputHasConsumers(l)
            | Violation::MissingInbound(l)
            | Violation::UnmergedInbound(l) => Some(l),
            Violation::UnknownInbound { layer, .. }
            | Violation::MissingAttr { layer, .. }
            | Violation::InvalidAttr { layer, .. }
            | Violation::RankMismatch { layer, .. }
            | Violation::ShapeConflict { layer, .. } => Some(layer),
        }
    }
}

impl NetworkGraph {
    pub fn layer(&self, id: &str) -> Option<&LayerSpec> {
        self.layers.iter().find(|l| l.id == id)
    }

    pub(crate) fn index(&self) -> BTreeMap<&str, usize> {
        self.layers.iter().enumerate().map(|(i, l)| (l.id.as_str(), i)).collect()
    }

    /// Layer indices in topological order, smallest id first among ready
    /// layers. `Err` lists the layers left on a cycle. Unknown inbound ids
    /// are ignored here; [`validate_dag`] reports them.
    pub fn canonical_order(&self) -> core::result::Result<Vec<usize>, Vec<String>> {
        let index = self.index();
        let mut indegree = alloc::vec![0usize; self.layers.len()];
        let mut succ: Vec<Vec<usize>> = alloc::vec![Vec::new(); self.layers.len()];
        for (i, l) in self.layers.iter().enumerate() {
            for src in &l.inbound {
                if let Some(&j) = index.get(src.as_str()) {
                    indegree[i] += 1;
                    succ[j].push(i);
                }
            }
        }
        let mut ready: BTreeSet<(&str, usize)> = self
            .layers
            .iter()
            .enumerate()
            .filter(|(i, _)| indegree[*i] == 0)
            .map(|(i, l)| (l.id.as_str(), i))
            .collect();
        let mut order = Vec::with_capacity(self.layers.len());
        while let Some((_, i)) = ready.pop_first() {
            order.push(i);
            for &j in &succ[i] {
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    ready.insert((self.layers[j].id.as_str(), j));
                }
            }
        }
        if order.len() == self.layers.len() {
            Ok(order)
        } else {
            let mut stuck: Vec<String> = (0..self.layers.len())
                .filter(|i| indegree[*i] > 0)
                .map(|i| self.layers[i].id.clone())
                .collect();
            stuck.sort();
            Err(stuck)
        }
    }

    /// A copy with the layer list in canonical topological order.
    pub fn canonicalized(&self) -> Result<NetworkGraph> {
        let order = self
            .canonical_order()
            .map_err(|ids| Error::InvalidNetwork(alloc::vec![Violation::Cycle(ids)]))?;
        Ok(NetworkGraph {
            layers: order.into_iter().map(|i| self.layers[i].clone()).collect(),
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
            globals: self.globals.clone(),
        })
    }

    pub fn weight_sharing(&self) -> bool {
        self.globals.get(WEIGHT_SHARING_GLOBAL).and_then(|v| v.as_bool()).unwrap_or(false)
    }
}

/// Every structural, attribute and rank/shape violation; `Ok` iff none.
pub fn validate_dag(network: &NetworkGraph) -> core::result::Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    let index = network.index();

    let mut seen = BTreeSet::new();
    for l in &network.layers {
        if !seen.insert(l.id.as_str()) {
            violations.push(Violation::DuplicateLayer(l.id.clone()));
        }
    }
    for id in network.inputs.iter().chain(&network.outputs) {
        if !index.contains_key(id.as_str()) {
            violations.push(Violation::UnknownLayer(id.clone()));
        }
    }
    let mut consumers: BTreeMap<&str, usize> = BTreeMap::new();
    for l in &network.layers {
        for src in &l.inbound {
            if !index.contains_key(src.as_str()) {
                violations.push(Violation::UnknownInbound {
                    layer: l.id.clone(),
                    inbound: src.clone(),
                });
            }
            *consumers.entry(src.as_str()).or_default() += 1;
        }
        match l.op_kind {
            OpKind::Input => {
                if !l.inbound.is_empty() {
                    violations.push(Violation::InputHasInbound(l.id.clone()));
                }
            }
            OpKind::ConcatMerge => {
                if l.inbound.is_empty() {
                    violations.push(Violation::MissingInbound(l.id.clone()));
                }
            }
            _ => {
                if l.inbound.is_empty() {
                    violations.push(Violation::MissingInbound(l.id.clone()));
                } else if l.inbound.len() > 1 {
                    violations.push(Violation::UnmergedInbound(l.id.clone()));
                }
            }
        }
        shape::check_attrs(l, &mut violations);
    }
    for id in &network.outputs {
        if consumers.contains_key(id.as_str()) {
            violations.push(Violation::OutputHasConsumers(id.clone()));
        }
    }
    for id in &network.inputs {
        if let Some(&i) = index.get(id.as_str()) {
            if !network.layers[i].inbound.is_empty() && network.layers[i].op_kind != OpKind::Input {
                violations.push(Violation::InputHasInbound(id.clone()));
            }
        }
    }

    let order = match network.canonical_order() {
        Ok(order) => order,
        Err(ids) => {
            violations.push(Violation::Cycle(ids));
            return Err(violations);
        }
    };

    // reachability: forward from inputs, backward from outputs
    let n = network.layers.len();
    let mut from_input = alloc::vec![false; n];
    for id in &network.inputs {
        if let Some(&i) = index.get(id.as_str()) {
            from_input[i] = true;
        }
    }
    for &i in &order {
        if network.layers[i]
            .inbound
            .iter()
            .any(|s| index.get(s.as_str()).is_some_and(|&j| from_input[j]))
        {
            from_input[i] = true;
        }
    }
    let mut to_output = alloc::vec![false; n];
    for id in &network.outputs {
        if let Some(&i) = index.get(id.as_str()) {
            to_output[i] = true;
        }
    }
    for &i in order.iter().rev() {
        if to_output[i] {
            for s in &network.layers[i].inbound {
                if let Some(&j) = index.get(s.as_str()) {
                    to_output[j] = true;
                }
            }
        }
    }
    for (i, l) in network.layers.iter().enumerate() {
        if !from_input[i] {
            violations.push(Violation::Unreachable(l.id.clone()));
        }
        if !to_output[i] {
            violations.push(Violation::DeadEnd(l.id.clone()));
        }
    }

    if violations.is_empty() {
        shape::propagate(network, &order, None, &mut violations);
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// Multiplies conv filters and dense/recurrent widths by `scale`, rounding
/// up. The output head keeps its unit count.
pub fn augment_filters(network: &NetworkGraph, scale: f64) -> Result<NetworkGraph> {
    if !(scale >= 1.0) || !scale.is_finite() {
        return Err(Error::InvalidArgument(alloc::format!("augmentation scale {scale} must be >= 1")));
    }
    let mut out = network.clone();
    for layer in &mut out.layers {
        let key = match layer.op_kind {
            OpKind::Conv1d | OpKind::Conv2d => attr::FILTERS,
            OpKind::Dense | OpKind::Lstm | OpKind::Gru => attr::UNITS,
            _ => continue,
        };
        if let Some(AttrValue::Int(w)) = layer.attrs.get_mut(key) {
            *w = libm::ceil(*w as f64 * scale) as i64;
        }
    }
    Ok(out)
}
