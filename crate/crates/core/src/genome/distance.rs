use alloc::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::chromosome::{ChromosomeGraph, NodePayload};
use super::params::{table_distance, SearchSpace};

/// Weights of the compatibility distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityCoefficients {
    /// Weight on the disjoint + excess gene fraction.
    pub structural: f64,
    /// Weight on the mean hyperparameter distance of matching nodes.
    pub parameter: f64,
}

impl Default for CompatibilityCoefficients {
    fn default() -> Self {
        Self {
            structural: 1.0,
            parameter: 1.0,
        }
    }
}

/// NEAT-style distance with a hyperparameter term in place of the weight
/// term:
///
/// `structural * (disjoint + excess) / N + parameter * mean_param_distance`
///
/// where N is the larger gene count and the parameter distance averages the
/// normalized table distance over matching nodes (blueprints add their
/// globals table as one more item, and a differing species pointer counts 1).
pub fn compatibility_distance(
    a: &ChromosomeGraph,
    b: &ChromosomeGraph,
    coefficients: &CompatibilityCoefficients,
    space: &SearchSpace,
) -> f64 {
    let genes_a: BTreeSet<u64> = a
        .nodes
        .iter()
        .map(|n| n.innovation)
        .chain(a.edges.iter().map(|e| e.innovation))
        .collect();
    let genes_b: BTreeSet<u64> = b
        .nodes
        .iter()
        .map(|n| n.innovation)
        .chain(b.edges.iter().map(|e| e.innovation))
        .collect();
    let unmatched = genes_a.symmetric_difference(&genes_b).count();
    let n = genes_a.len().max(genes_b.len()).max(1);
    let structural = unmatched as f64 / n as f64;

    let mut total = 0.0;
    let mut items = 0usize;
    for node in &a.nodes {
        let Some(other) = b.node(node.innovation) else {
            continue;
        };
        total += match (&node.payload, &other.payload) {
            (NodePayload::Params(x), NodePayload::Params(y)) => table_distance(x, y, &space.module_params),
            (NodePayload::SpeciesPointer(x), NodePayload::SpeciesPointer(y)) if x == y => 0.0,
            _ => 1.0,
        };
        items += 1;
    }
    if let (Some(x), Some(y)) = (&a.globals, &b.globals) {
        total += table_distance(x, y, &space.blueprint_globals);
        items += 1;
    }
    let parametric = if items == 0 { 0.0 } else { total / items as f64 };

    coefficients.structural * structural + coefficients.parameter * parametric
}
