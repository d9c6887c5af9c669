//! Splicing blueprints and modules into full networks.
//!
//! Each blueprint node is replaced by one module from the species it points
//! at; every node pointing at the same species gets the same module. Only
//! enabled edges count. Nodes without enabled inbound edges read from the
//! input layer, nodes without enabled outbound edges feed the output head,
//! and fan-in anywhere becomes an explicit `concat_merge`.
//!
//! Pooling is placed by level so that every input-to-output path crosses
//! the same number of pools: the input has level 0, a blueprint node has
//! level 1 + the largest level among its predecessors, and the output head
//! sits one above the deepest node. The required pools are spread evenly
//! over the level boundaries 2..=L(output), and an edge u -> v carries the
//! pools of the boundaries in (L(u), L(v)]. Branches that meet at a merge
//! therefore always agree on their spatial extent.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{param_names, LayerSearchSpace};
use crate::genome::{ChromosomeGraph, HyperparameterTable, ParamValue};
use crate::multiobjective::ObjectiveVector;
use crate::network::{attr, AttrValue, LayerSpec, NetworkGraph, OpKind, WEIGHT_SHARING_GLOBAL};
use crate::speciation::Population;
use crate::{Error, Result};

pub const INPUT_LAYER: &str = "input";
pub const OUTPUT_LAYER: &str = "output";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssembledNetwork {
    pub network: NetworkGraph,
    pub blueprint_id: u64,
    /// Resolved species id -> chosen module id.
    pub module_choices: BTreeMap<u64, u64>,
    /// Blueprint node innovation -> resolved species id.
    pub node_species: BTreeMap<u64, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objectives: Option<ObjectiveVector>,
}

impl AssembledNetwork {
    /// Chromosome ids this network was built from (blueprint first).
    pub fn contributors(&self) -> impl Iterator<Item = u64> + '_ {
        core::iter::once(self.blueprint_id).chain(self.module_choices.values().copied())
    }
}

/// Builds `count` networks, cycling through `blueprints` in order.
pub fn assemble_networks<R: Rng + ?Sized>(
    blueprints: &[&ChromosomeGraph],
    modules: &Population,
    count: usize,
    space: &LayerSearchSpace,
    rng: &mut R,
) -> Result<Vec<AssembledNetwork>> {
    if blueprints.is_empty() {
        return Err(Error::InvalidArgument("no blueprints to assemble".into()));
    }
    (0..count)
        .map(|i| assemble(blueprints[i % blueprints.len()], modules, space, rng))
        .collect()
}

fn text(s: &str) -> AttrValue {
    AttrValue::Text(s.into())
}

/// One layer from a module node's hyperparameter table.
pub fn layer_from_table(id: String, table: &HyperparameterTable) -> Result<LayerSpec> {
    use param_names::*;
    let get = |k: &str| {
        table
            .get(k)
            .ok_or_else(|| Error::InvalidChromosome(format!("layer table lacks `{k}`")))
    };
    let kind_name = get(LAYER_TYPE)?.as_str().unwrap_or_default();
    let kind = OpKind::parse(kind_name)
        .filter(|k| k.is_module_layer())
        .ok_or_else(|| Error::InvalidChromosome(format!("unknown layer type `{kind_name}`")))?;
    let mut layer = LayerSpec::new(id, kind);
    if kind == OpKind::Dropout {
        let rate = get(DROPOUT_RATE)?.as_f64().unwrap_or(0.0);
        return Ok(layer.with_attr(attr::RATE, AttrValue::Real(rate)));
    }
    let width = get(WIDTH)?.as_i64().unwrap_or(1);
    layer = match kind {
        OpKind::Conv1d | OpKind::Conv2d => layer
            .with_attr(attr::FILTERS, AttrValue::Int(width))
            .with_attr(attr::KERNEL_SIZE, AttrValue::Int(get(KERNEL_SIZE)?.as_i64().unwrap_or(1))),
        _ => layer.with_attr(attr::UNITS, AttrValue::Int(width)),
    };
    layer = layer
        .with_attr(attr::ACTIVATION, text(get(ACTIVATION)?.as_str().unwrap_or_default()))
        .with_attr(attr::INITIALIZER, text(get(INITIALIZER)?.as_str().unwrap_or_default()));
    if let Some(wd) = table.get(WEIGHT_DECAY).and_then(ParamValue::as_f64) {
        layer = layer.with_attr(attr::WEIGHT_DECAY, AttrValue::Real(wd));
    }
    Ok(layer)
}

/// Enabled-edge predecessors and successors of every node.
fn adjacency(c: &ChromosomeGraph) -> (BTreeMap<u64, Vec<u64>>, BTreeMap<u64, Vec<u64>>) {
    let mut pred: BTreeMap<u64, Vec<u64>> = c.nodes.iter().map(|n| (n.innovation, Vec::new())).collect();
    let mut succ = pred.clone();
    for e in c.enabled_edges() {
        pred.entry(e.dst).or_default().push(e.src);
        succ.entry(e.src).or_default().push(e.dst);
    }
    (pred, succ)
}

/// Pools per boundary level for `levels` boundaries `2..=top`.
fn pool_plan(required: usize, top: usize) -> BTreeMap<usize, usize> {
    let mut plan = BTreeMap::new();
    let boundaries = top.saturating_sub(1);
    if required == 0 || boundaries == 0 {
        return plan;
    }
    if required <= boundaries {
        for k in 0..required {
            let pos = (2 * k + 1) * boundaries / (2 * required);
            *plan.entry(2 + pos).or_default() += 1;
        }
    } else {
        for b in 0..boundaries {
            let extra = usize::from(b < required % boundaries);
            plan.insert(2 + b, required / boundaries + extra);
        }
    }
    plan
}

struct Builder {
    layers: Vec<LayerSpec>,
    /// Pool chains already emitted per source layer.
    pool_chains: BTreeMap<String, Vec<String>>,
}

impl Builder {
    /// Layer reading `sources`, merged under `merge_id` when more than one.
    fn join(&mut self, sources: Vec<String>, merge_id: String) -> String {
        if sources.len() == 1 {
            return sources.into_iter().next().unwrap_or_default();
        }
        self.layers
            .push(LayerSpec::new(merge_id.clone(), OpKind::ConcatMerge).with_inbound(&sources));
        merge_id
    }

    /// `src` followed by `count` max pools (shared by all consumers of `src`).
    fn pooled(&mut self, src: &str, count: usize) -> String {
        let mut chain = self.pool_chains.remove(src).unwrap_or_default();
        while chain.len() < count {
            let prev = chain.last().cloned().unwrap_or_else(|| src.into());
            let id = format!("{src}.pool{}", chain.len() + 1);
            self.layers.push(
                LayerSpec::new(id.clone(), OpKind::MaxPool)
                    .with_attr(attr::POOL_SIZE, AttrValue::Int(2))
                    .with_inbound(&[prev]),
            );
            chain.push(id);
        }
        let out = if count == 0 { src.into() } else { chain[count - 1].clone() };
        self.pool_chains.insert(src.into(), chain);
        out
    }
}

/// Expands one blueprint. Dead species pointers are re-pointed to a random
/// live species (consistently within this network); each resolved species
/// contributes one uniformly chosen module.
pub fn assemble<R: Rng + ?Sized>(
    blueprint: &ChromosomeGraph,
    modules: &Population,
    space: &LayerSearchSpace,
    rng: &mut R,
) -> Result<AssembledNetwork> {
    let live = modules.species_ids();
    if live.is_empty() {
        return Err(Error::InvalidArgument("module population has no species".into()));
    }
    let order = blueprint
        .topological_order()
        .ok_or_else(|| Error::InvalidChromosome(format!("blueprint #{} has a cycle", blueprint.id)))?;
    let (pred, succ) = adjacency(blueprint);

    let mut remap: BTreeMap<u64, u64> = BTreeMap::new();
    let mut node_species = BTreeMap::new();
    let mut module_choices: BTreeMap<u64, u64> = BTreeMap::new();
    let mut chosen: BTreeMap<u64, &ChromosomeGraph> = BTreeMap::new();
    for &b in &order {
        let pointer = blueprint
            .node(b)
            .and_then(|n| n.species_pointer())
            .ok_or_else(|| Error::InvalidChromosome(format!("blueprint node {b} has no species pointer")))?;
        let species = if live.contains(&pointer) {
            pointer
        } else {
            *remap.entry(pointer).or_insert_with(|| *live.choose(rng).unwrap_or(&live[0]))
        };
        node_species.insert(b, species);
        if let alloc::collections::btree_map::Entry::Vacant(slot) = chosen.entry(species) {
            let members = &modules.species(species).map(|s| s.members.as_slice()).unwrap_or(&[]);
            let module = members
                .choose(rng)
                .ok_or_else(|| Error::InvalidArgument(format!("module species {species} is empty")))?;
            slot.insert(module);
            module_choices.insert(species, module.id);
        }
    }

    // levels over enabled edges
    let mut level: BTreeMap<u64, usize> = BTreeMap::new();
    for &b in &order {
        let l = 1 + pred[&b].iter().map(|p| level[p]).max().unwrap_or(0);
        level.insert(b, l);
    }
    let top = 1 + level.values().copied().max().unwrap_or(0);
    let plan = pool_plan(space.min_pooling_layers, top);
    let pools_between = |from: usize, to: usize| -> usize { plan.range(from + 1..=to).map(|(_, n)| *n).sum() };

    let mut builder = Builder {
        layers: Vec::new(),
        pool_chains: BTreeMap::new(),
    };
    let shape: Vec<i64> = space.input_shape.iter().map(|d| *d as i64).collect();
    builder
        .layers
        .push(LayerSpec::new(INPUT_LAYER, OpKind::Input).with_attr(attr::SHAPE, AttrValue::IntList(shape)));

    let mut exits: BTreeMap<u64, String> = BTreeMap::new();
    for &b in &order {
        let sources: Vec<String> = if pred[&b].is_empty() {
            alloc::vec![String::from(INPUT_LAYER)]
        } else {
            pred[&b]
                .iter()
                .map(|p| {
                    let n = pools_between(level[p], level[&b]);
                    builder.pooled(&exits[p], n)
                })
                .collect()
        };
        let entry = builder.join(sources, format!("b{b}.in"));
        let species = node_species[&b];
        let module = chosen[&species];
        let exit = splice_module(&mut builder, module, b, species, &entry, space.weight_sharing)?;
        exits.insert(b, exit);
    }

    let sinks: Vec<String> = order
        .iter()
        .filter(|b| succ[*b].is_empty())
        .map(|b| {
            let n = pools_between(level[b], top);
            builder.pooled(&exits[b], n)
        })
        .collect();
    let head_in = builder.join(sinks, format!("{OUTPUT_LAYER}.in"));
    builder.layers.push(
        LayerSpec::new(OUTPUT_LAYER, OpKind::Output)
            .with_attr(attr::UNITS, AttrValue::Int(space.output_units as i64))
            .with_inbound(&[head_in]),
    );

    let mut globals = blueprint.globals.clone().unwrap_or_default();
    globals.insert(WEIGHT_SHARING_GLOBAL.into(), ParamValue::Bool(space.weight_sharing));
    Ok(AssembledNetwork {
        network: NetworkGraph {
            layers: builder.layers,
            inputs: alloc::vec![INPUT_LAYER.into()],
            outputs: alloc::vec![OUTPUT_LAYER.into()],
            globals,
        },
        blueprint_id: blueprint.id,
        module_choices,
        node_species,
        objectives: None,
    })
}

/// Emits the module's layers for blueprint node `b`, all module sources
/// reading `entry`. Returns the layer carrying the module's output.
fn splice_module(builder: &mut Builder, module: &ChromosomeGraph, b: u64, species: u64, entry: &str, sharing: bool) -> Result<String> {
    let order = module
        .topological_order()
        .ok_or_else(|| Error::InvalidChromosome(format!("module #{} has a cycle", module.id)))?;
    let (pred, succ) = adjacency(module);
    let id = |n: u64| format!("b{b}.m{n}");
    for &n in &order {
        let table = module
            .node(n)
            .and_then(|g| g.params())
            .ok_or_else(|| Error::InvalidChromosome(format!("module node {n} has no layer table")))?;
        let sources: Vec<String> = if pred[&n].is_empty() {
            alloc::vec![String::from(entry)]
        } else {
            pred[&n].iter().map(|p| id(*p)).collect()
        };
        let input = builder.join(sources, format!("{}.in", id(n)));
        let mut layer = layer_from_table(id(n), table)?.with_inbound(&[input]);
        if sharing && layer.op_kind.is_weighted() {
            layer = layer.with_attr(attr::SHARE_KEY, text(&format!("s{species}.c{}.n{n}", module.id)));
        }
        builder.layers.push(layer);
    }
    let sinks: Vec<String> = order.iter().filter(|n| succ[*n].is_empty()).map(|n| id(*n)).collect();
    Ok(builder.join(sinks, format!("b{b}.out")))
}
