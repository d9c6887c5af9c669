use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::innovation::{InnovationRegistry, MutationSignature};
use super::params::{check_table, sample_table, HyperparameterTable, SearchSpace};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChromosomeKind {
    Module,
    Blueprint,
}

/// What a node carries: a layer table (modules) or a module species id (blueprints).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodePayload {
    Params(HyperparameterTable),
    SpeciesPointer(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeGene {
    pub innovation: u64,
    #[serde(flatten)]
    pub payload: NodePayload,
}

impl NodeGene {
    pub fn params(&self) -> Option<&HyperparameterTable> {
        match &self.payload {
            NodePayload::Params(t) => Some(t),
            NodePayload::SpeciesPointer(_) => None,
        }
    }

    pub fn species_pointer(&self) -> Option<u64> {
        match self.payload {
            NodePayload::SpeciesPointer(s) => Some(s),
            NodePayload::Params(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeGene {
    pub innovation: u64,
    pub src: u64,
    pub dst: u64,
    pub enabled: bool,
}

/// Node innovations and (innovation, src, dst, enabled) edges.
pub type StructureKey = (Vec<u64>, Vec<(u64, u64, u64, bool)>);

/// A NEAT-style graph genome. Nodes and edges are kept sorted by innovation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChromosomeGraph {
    pub id: u64,
    pub kind: ChromosomeKind,
    pub nodes: Vec<NodeGene>,
    pub edges: Vec<EdgeGene>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub globals: Option<HyperparameterTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fitness: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secondary: Option<f64>,
}

/// Inputs needed to create node payloads.
#[derive(Debug, Clone, Copy)]
pub struct GenomeContext<'a> {
    pub space: &'a SearchSpace,
    /// Live module species; blueprint nodes point into this set.
    pub module_species: &'a [u64],
}

impl GenomeContext<'_> {
    pub(crate) fn new_payload<R: Rng + ?Sized>(&self, kind: ChromosomeKind, rng: &mut R) -> Result<NodePayload> {
        match kind {
            ChromosomeKind::Module => Ok(NodePayload::Params(sample_table(&self.space.module_params, rng))),
            ChromosomeKind::Blueprint => {
                let species = self
                    .module_species
                    .choose(rng)
                    .copied()
                    .ok_or_else(|| Error::Config("no module species to point blueprint nodes at".into()))?;
                Ok(NodePayload::SpeciesPointer(species))
            }
        }
    }
}

impl ChromosomeGraph {
    /// Two nodes joined by one edge, hyperparameters sampled uniformly.
    pub fn new_minimal<R: Rng + ?Sized>(
        kind: ChromosomeKind,
        id: u64,
        ctx: &GenomeContext<'_>,
        registry: &mut InnovationRegistry,
        rng: &mut R,
    ) -> Result<Self> {
        match kind {
            ChromosomeKind::Module if ctx.space.module_params.is_empty() => {
                return Err(Error::Config("module search space is empty".into()))
            }
            ChromosomeKind::Blueprint if ctx.space.blueprint_globals.is_empty() => {
                return Err(Error::Config("blueprint global search space is empty".into()))
            }
            _ => {}
        }
        let ids = registry.ids_for(MutationSignature::Minimal { kind }, 3);
        let nodes = vec![
            NodeGene {
                innovation: ids[0],
                payload: ctx.new_payload(kind, rng)?,
            },
            NodeGene {
                innovation: ids[1],
                payload: ctx.new_payload(kind, rng)?,
            },
        ];
        let edges = vec![EdgeGene {
            innovation: ids[2],
            src: ids[0],
            dst: ids[1],
            enabled: true,
        }];
        let globals = match kind {
            ChromosomeKind::Blueprint => Some(sample_table(&ctx.space.blueprint_globals, rng)),
            ChromosomeKind::Module => None,
        };
        Ok(Self {
            id,
            kind,
            nodes,
            edges,
            globals,
            fitness: None,
            secondary: None,
        })
    }

    pub fn node(&self, innovation: u64) -> Option<&NodeGene> {
        self.nodes
            .binary_search_by_key(&innovation, |n| n.innovation)
            .ok()
            .map(|i| &self.nodes[i])
    }

    pub fn has_node(&self, innovation: u64) -> bool {
        self.node(innovation).is_some()
    }

    pub fn has_gene(&self, innovation: u64) -> bool {
        self.has_node(innovation) || self.edges.binary_search_by_key(&innovation, |e| e.innovation).is_ok()
    }

    pub fn gene_count(&self) -> usize {
        self.nodes.len() + self.edges.len()
    }

    pub fn enabled_edges(&self) -> impl Iterator<Item = &EdgeGene> {
        self.edges.iter().filter(|e| e.enabled)
    }

    pub(crate) fn sort_genes(&mut self) {
        self.nodes.sort_by_key(|n| n.innovation);
        self.edges.sort_by_key(|e| e.innovation);
    }

    /// Structure only: node innovations and (innovation, src, dst, enabled) edges.
    pub fn structure_key(&self) -> StructureKey {
        (
            self.nodes.iter().map(|n| n.innovation).collect(),
            self.edges.iter().map(|e| (e.innovation, e.src, e.dst, e.enabled)).collect(),
        )
    }

    /// Node innovations in a topological order over all edges (enabled or
    /// not), lowest innovation first among ready nodes. `None` on a cycle.
    pub fn topological_order(&self) -> Option<Vec<u64>> {
        let mut indegree: BTreeMap<u64, usize> = self.nodes.iter().map(|n| (n.innovation, 0)).collect();
        let mut succ: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
        for e in &self.edges {
            *indegree.get_mut(&e.dst)? += 1;
            succ.entry(e.src).or_default().push(e.dst);
        }
        let mut ready: BTreeSet<u64> = indegree.iter().filter(|(_, d)| **d == 0).map(|(n, _)| *n).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(n) = ready.pop_first() {
            order.push(n);
            for m in succ.get(&n).into_iter().flatten() {
                let d = indegree.get_mut(m)?;
                *d -= 1;
                if *d == 0 {
                    ready.insert(*m);
                }
            }
        }
        (order.len() == self.nodes.len()).then_some(order)
    }

    /// Nodes reachable from `from` along any edge (excluding `from` itself
    /// unless it lies on a cycle).
    pub(crate) fn reachable_from(&self, from: u64) -> BTreeSet<u64> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![from];
        while let Some(n) = stack.pop() {
            for e in self.edges.iter().filter(|e| e.src == n) {
                if seen.insert(e.dst) {
                    stack.push(e.dst);
                }
            }
        }
        seen
    }

    /// Checks every structural and payload invariant.
    pub fn validate(&self, space: Option<&SearchSpace>) -> Result<()> {
        let invalid = |msg: alloc::string::String| Err(Error::InvalidChromosome(format!("#{}: {}", self.id, msg)));
        if self.nodes.is_empty() {
            return invalid("no nodes".into());
        }
        let mut seen = BTreeSet::new();
        for n in &self.nodes {
            if !seen.insert(n.innovation) {
                return invalid(format!("duplicate innovation {}", n.innovation));
            }
            match (&n.payload, self.kind) {
                (NodePayload::Params(t), ChromosomeKind::Module) => {
                    if let Some(space) = space {
                        check_table(t, &space.module_params)?;
                    }
                }
                (NodePayload::SpeciesPointer(_), ChromosomeKind::Blueprint) => {}
                _ => return invalid(format!("node {} payload does not match kind", n.innovation)),
            }
        }
        let mut pairs = BTreeSet::new();
        for e in &self.edges {
            if !seen.insert(e.innovation) {
                return invalid(format!("duplicate innovation {}", e.innovation));
            }
            if e.src == e.dst {
                return invalid(format!("self-loop on {}", e.src));
            }
            if !self.has_node(e.src) || !self.has_node(e.dst) {
                return invalid(format!("edge {} has a missing endpoint", e.innovation));
            }
            if !pairs.insert((e.src, e.dst)) {
                return invalid(format!("duplicate edge {}->{}", e.src, e.dst));
            }
        }
        if self.topological_order().is_none() {
            return invalid("edges form a cycle".into());
        }
        match (self.kind, &self.globals) {
            (ChromosomeKind::Blueprint, Some(g)) => {
                if let Some(space) = space {
                    check_table(g, &space.blueprint_globals)?;
                }
            }
            (ChromosomeKind::Module, None) => {}
            _ => return invalid("globals must be present exactly for blueprints".into()),
        }
        Ok(())
    }

    /// Stable-key-order JSON used by checkpoints.
    pub fn to_checkpoint_json(&self) -> Result<alloc::string::String> {
        serde_json::to_string(self).map_err(|e| Error::Decode(format!("{e}")))
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Self> {
        let mut c: Self = serde_json::from_str(text).map_err(|e| Error::Decode(format!("{e}")))?;
        c.sort_genes();
        c.validate(None)?;
        Ok(c)
    }
}
