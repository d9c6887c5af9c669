use alloc::collections::BTreeSet;
use alloc::string::String;

use super::{attr, infer_shapes, AttrValue, LayerSpec, NetworkGraph, OpKind, TensorShape};
use crate::Result;

/// Trainable parameters of one layer fed `in_features` channels.
pub fn layer_parameters(layer: &LayerSpec, input: &TensorShape) -> u64 {
    let i = input.features() as u64;
    let get = |k| layer.int_attr(k).unwrap_or(0).max(0) as u64;
    match layer.op_kind {
        OpKind::Dense | OpKind::Output => {
            let o = get(attr::UNITS);
            i * o + o
        }
        OpKind::Conv1d | OpKind::Conv2d => {
            let d = if layer.op_kind == OpKind::Conv1d { 1 } else { 2 };
            let f = get(attr::FILTERS);
            get(attr::KERNEL_SIZE).pow(d) * i * f + f
        }
        OpKind::Lstm => {
            let h = get(attr::UNITS);
            4 * ((i + h) * h + h)
        }
        OpKind::Gru => {
            let h = get(attr::UNITS);
            3 * ((i + h) * h + h)
        }
        OpKind::Dropout | OpKind::MaxPool | OpKind::Flatten | OpKind::ConcatMerge | OpKind::Input => 0,
    }
}

/// Sum of per-layer parameters. With weight sharing on, layers carrying the
/// same `share_key` and the same block shape count once.
pub fn count_parameters(network: &NetworkGraph, input_shape: Option<&TensorShape>) -> Result<u64> {
    let shapes = infer_shapes(network, input_shape)?;
    let sharing = network.weight_sharing();
    let mut blocks: BTreeSet<(String, OpKind, usize, i64, i64)> = BTreeSet::new();
    let mut total = 0u64;
    for layer in &network.layers {
        let Some(src) = layer.inbound.first() else { continue };
        let input = &shapes[src];
        let params = layer_parameters(layer, input);
        if params == 0 {
            continue;
        }
        if sharing {
            if let Some(AttrValue::Text(key)) = layer.attrs.get(attr::SHARE_KEY) {
                let width = layer.op_kind.width_attr().and_then(|k| layer.int_attr(k)).unwrap_or(0);
                let kernel = layer.int_attr(attr::KERNEL_SIZE).unwrap_or(0);
                if !blocks.insert((key.clone(), layer.op_kind, input.features(), width, kernel)) {
                    continue;
                }
            }
        }
        total += params;
    }
    Ok(total)
}
