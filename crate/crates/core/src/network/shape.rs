use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{attr, AttrValue, LayerSpec, NetworkGraph, OpKind, Violation};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimRole {
    Temporal,
    Spatial,
    Feature,
}

/// A per-example shape (batch excluded). The last dim is the feature axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorShape {
    pub dims: Vec<usize>,
    pub roles: Vec<DimRole>,
}

impl TensorShape {
    /// Roles follow the rank: `[F]`, `[T, F]`, `[S, S, F]`, `[S, S, S, F]`.
    pub fn new(dims: Vec<usize>) -> Self {
        let roles = match dims.len() {
            0 => Vec::new(),
            2 => alloc::vec![DimRole::Temporal, DimRole::Feature],
            n => {
                let mut r = alloc::vec![DimRole::Spatial; n - 1];
                r.push(DimRole::Feature);
                r
            }
        };
        Self { dims, roles }
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn features(&self) -> usize {
        self.dims.last().copied().unwrap_or(0)
    }

    fn with_features(&self, features: usize) -> Self {
        let mut s = self.clone();
        if let Some(last) = s.dims.last_mut() {
            *last = features;
        }
        s
    }
}

fn positive_int(layer: &LayerSpec, key: &'static str, out: &mut Vec<Violation>) {
    match layer.attrs.get(key) {
        None => out.push(Violation::MissingAttr {
            layer: layer.id.clone(),
            attr: key,
        }),
        Some(AttrValue::Int(v)) if *v > 0 => {}
        Some(_) => out.push(Violation::InvalidAttr {
            layer: layer.id.clone(),
            attr: key,
        }),
    }
}

fn one_of(layer: &LayerSpec, key: &'static str, allowed: &[&str], out: &mut Vec<Violation>) {
    match layer.attrs.get(key) {
        None => out.push(Violation::MissingAttr {
            layer: layer.id.clone(),
            attr: key,
        }),
        Some(AttrValue::Text(s)) if allowed.contains(&s.as_str()) => {}
        Some(_) => out.push(Violation::InvalidAttr {
            layer: layer.id.clone(),
            attr: key,
        }),
    }
}

/// Attribute completeness and ranges for the layer's op kind.
pub(super) fn check_attrs(layer: &LayerSpec, out: &mut Vec<Violation>) {
    let weighted = |out: &mut Vec<Violation>| {
        one_of(layer, attr::ACTIVATION, &attr::ACTIVATIONS, out);
        one_of(layer, attr::INITIALIZER, &attr::INITIALIZERS, out);
    };
    match layer.op_kind {
        OpKind::Conv1d | OpKind::Conv2d => {
            positive_int(layer, attr::FILTERS, out);
            positive_int(layer, attr::KERNEL_SIZE, out);
            weighted(out);
        }
        OpKind::Dense | OpKind::Lstm | OpKind::Gru => {
            positive_int(layer, attr::UNITS, out);
            weighted(out);
        }
        OpKind::Output => positive_int(layer, attr::UNITS, out),
        OpKind::Dropout => match layer.attrs.get(attr::RATE).map(AttrValue::as_real) {
            None => out.push(Violation::MissingAttr {
                layer: layer.id.clone(),
                attr: attr::RATE,
            }),
            Some(Some(r)) if (0.0..1.0).contains(&r) => {}
            Some(_) => out.push(Violation::InvalidAttr {
                layer: layer.id.clone(),
                attr: attr::RATE,
            }),
        },
        OpKind::MaxPool => positive_int(layer, attr::POOL_SIZE, out),
        OpKind::Input => match layer.attrs.get(attr::SHAPE) {
            None => out.push(Violation::MissingAttr {
                layer: layer.id.clone(),
                attr: attr::SHAPE,
            }),
            Some(AttrValue::IntList(dims)) if !dims.is_empty() && dims.iter().all(|d| *d > 0) => {}
            Some(_) => out.push(Violation::InvalidAttr {
                layer: layer.id.clone(),
                attr: attr::SHAPE,
            }),
        },
        OpKind::Flatten | OpKind::ConcatMerge => {}
    }
}

fn rank_error(layer: &LayerSpec, expected: &'static str, found: usize) -> Violation {
    Violation::RankMismatch {
        layer: layer.id.clone(),
        expected,
        found,
    }
}

fn attr_usize(layer: &LayerSpec, key: &str) -> usize {
    layer.int_attr(key).unwrap_or(1).max(1) as usize
}

/// Output shape of one layer given its inbound shapes (in inbound order).
fn layer_shape(
    layer: &LayerSpec,
    inputs: &[&TensorShape],
    input_override: Option<&TensorShape>,
) -> core::result::Result<TensorShape, Violation> {
    let first = || inputs[0];
    match layer.op_kind {
        OpKind::Input => {
            if let Some(shape) = input_override {
                return Ok(shape.clone());
            }
            match layer.attrs.get(attr::SHAPE) {
                Some(AttrValue::IntList(d)) => Ok(TensorShape::new(d.iter().map(|x| *x as usize).collect())),
                _ => Err(Violation::MissingAttr {
                    layer: layer.id.clone(),
                    attr: attr::SHAPE,
                }),
            }
        }
        OpKind::Conv1d => match first().rank() {
            2 => Ok(first().with_features(attr_usize(layer, attr::FILTERS))),
            r => Err(rank_error(layer, "rank 2 (time, features)", r)),
        },
        OpKind::Conv2d => match first().rank() {
            3 => Ok(first().with_features(attr_usize(layer, attr::FILTERS))),
            r => Err(rank_error(layer, "rank 3 (height, width, channels)", r)),
        },
        OpKind::Lstm | OpKind::Gru => match first().rank() {
            2 => Ok(first().with_features(attr_usize(layer, attr::UNITS))),
            r => Err(rank_error(layer, "rank 2 (time, features)", r)),
        },
        OpKind::Dense => match first().rank() {
            0 => Err(rank_error(layer, "rank >= 1", 0)),
            _ => Ok(first().with_features(attr_usize(layer, attr::UNITS))),
        },
        OpKind::Dropout => Ok(first().clone()),
        OpKind::MaxPool => {
            let s = first();
            if s.rank() < 2 {
                return Err(rank_error(layer, "rank >= 2", s.rank()));
            }
            let pool = attr_usize(layer, attr::POOL_SIZE);
            let mut out = s.clone();
            let n = out.dims.len();
            for d in &mut out.dims[..n - 1] {
                *d = d.div_ceil(pool);
            }
            Ok(out)
        }
        OpKind::Flatten => Ok(TensorShape::new(alloc::vec![first().dims.iter().product()])),
        OpKind::ConcatMerge => {
            let head = first();
            let mut features = 0;
            for s in inputs {
                if s.rank() != head.rank() {
                    return Err(rank_error(layer, "equal ranks on all inbound", s.rank()));
                }
                if s.dims[..s.rank() - 1] != head.dims[..head.rank() - 1] {
                    return Err(Violation::ShapeConflict {
                        layer: layer.id.clone(),
                        detail: format!("cannot concatenate {:?} with {:?}", head.dims, s.dims),
                    });
                }
                features += s.features();
            }
            Ok(head.with_features(features))
        }
        // global average pooling, then a dense head
        OpKind::Output => match first().rank() {
            0 => Err(rank_error(layer, "rank >= 1", 0)),
            _ => Ok(TensorShape::new(alloc::vec![attr_usize(layer, attr::UNITS)])),
        },
    }
}

/// Forward pass over `order`. Layers downstream of a failure are skipped
/// so each problem is reported once.
pub(super) fn propagate(
    network: &NetworkGraph,
    order: &[usize],
    input_override: Option<&TensorShape>,
    violations: &mut Vec<Violation>,
) -> BTreeMap<String, TensorShape> {
    let mut shapes: BTreeMap<String, TensorShape> = BTreeMap::new();
    for &i in order {
        let layer = &network.layers[i];
        let inputs: Option<Vec<&TensorShape>> = layer.inbound.iter().map(|s| shapes.get(s)).collect();
        let Some(inputs) = inputs else { continue };
        if inputs.is_empty() && layer.op_kind != OpKind::Input {
            continue;
        }
        match layer_shape(layer, &inputs, input_override) {
            Ok(s) => {
                shapes.insert(layer.id.clone(), s);
            }
            Err(v) => violations.push(v),
        }
    }
    shapes
}

/// Shapes of every layer. `input_shape` overrides the `shape` attribute of
/// input layers when given.
pub fn infer_shapes(network: &NetworkGraph, input_shape: Option<&TensorShape>) -> Result<BTreeMap<String, TensorShape>> {
    let order = network
        .canonical_order()
        .map_err(|ids| Error::InvalidNetwork(alloc::vec![Violation::Cycle(ids)]))?;
    let mut violations = Vec::new();
    let shapes = propagate(network, &order, input_shape, &mut violations);
    if let Some(v) = violations.into_iter().next() {
        let layer = String::from(v.layer().unwrap_or(""));
        return Err(Error::Shape {
            layer,
            detail: format!("{v:?}"),
        });
    }
    if let Some(l) = network.layers.iter().find(|l| !shapes.contains_key(&l.id)) {
        return Err(Error::Shape {
            layer: l.id.clone(),
            detail: "no shape reaches this layer".into(),
        });
    }
    Ok(shapes)
}
