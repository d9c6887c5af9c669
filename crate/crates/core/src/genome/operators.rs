//! Structural and parametric mutation, and crossover by historical marking.

use alloc::vec::Vec;

use rand::seq::IndexedRandom;
use rand::Rng;

use super::chromosome::{ChromosomeGraph, EdgeGene, GenomeContext, NodeGene, NodePayload};
use super::innovation::{InnovationRegistry, MutationSignature};
use super::params::mutate_table;
use crate::{Error, Result};

/// Whether a structural mutation changed the chromosome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MutationOutcome {
    Applied,
    Skipped,
}

impl ChromosomeGraph {
    /// Splits a uniformly chosen enabled edge (u,v): disables it and routes
    /// u -> w -> v through a new node w.
    pub fn mutate_add_node<R: Rng + ?Sized>(
        &mut self,
        ctx: &GenomeContext<'_>,
        registry: &mut InnovationRegistry,
        rng: &mut R,
    ) -> Result<MutationOutcome> {
        let candidates: Vec<EdgeGene> = self.enabled_edges().copied().collect();
        let Some(edge) = candidates.choose(rng).copied() else {
            return Ok(MutationOutcome::Skipped);
        };
        let signature = MutationSignature::Split {
            kind: self.kind,
            edge: edge.innovation,
        };
        let mut ids = registry.ids_for(signature, 3);
        // a crossover child can re-enable an edge this lineage already split
        if ids.iter().any(|id| self.has_gene(*id)) {
            ids = registry.fresh(3);
        }
        let payload = ctx.new_payload(self.kind, rng)?;
        for e in self.edges.iter_mut().filter(|e| e.innovation == edge.innovation) {
            e.enabled = false;
        }
        self.nodes.push(NodeGene {
            innovation: ids[0],
            payload,
        });
        self.edges.push(EdgeGene {
            innovation: ids[1],
            src: edge.src,
            dst: ids[0],
            enabled: true,
        });
        self.edges.push(EdgeGene {
            innovation: ids[2],
            src: ids[0],
            dst: edge.dst,
            enabled: true,
        });
        self.sort_genes();
        Ok(MutationOutcome::Applied)
    }

    /// Every (src, dst) pair that can gain an edge without duplicating an
    /// existing one or closing a cycle.
    pub fn legal_connections(&self) -> Vec<(u64, u64)> {
        let mut legal = Vec::new();
        let downstream: Vec<_> = self.nodes.iter().map(|n| self.reachable_from(n.innovation)).collect();
        for a in &self.nodes {
            for (j, b) in self.nodes.iter().enumerate() {
                if a.innovation == b.innovation {
                    continue;
                }
                let exists = self.edges.iter().any(|e| e.src == a.innovation && e.dst == b.innovation);
                // b -> ... -> a would close a cycle
                let closes_cycle = downstream[j].contains(&a.innovation);
                if !exists && !closes_cycle {
                    legal.push((a.innovation, b.innovation));
                }
            }
        }
        legal
    }

    pub fn mutate_add_connection<R: Rng + ?Sized>(&mut self, registry: &mut InnovationRegistry, rng: &mut R) -> MutationOutcome {
        let legal = self.legal_connections();
        let Some(&(src, dst)) = legal.choose(rng) else {
            return MutationOutcome::Skipped;
        };
        let mut id = registry.ids_for(MutationSignature::Connect { kind: self.kind, src, dst }, 1)[0];
        if self.has_gene(id) {
            id = registry.fresh(1)[0];
        }
        self.edges.push(EdgeGene {
            innovation: id,
            src,
            dst,
            enabled: true,
        });
        self.sort_genes();
        MutationOutcome::Applied
    }

    /// Per-parameter perturbation of node tables (and blueprint species
    /// pointers) plus blueprint globals.
    pub fn mutate_hyperparameters<R: Rng + ?Sized>(&mut self, ctx: &GenomeContext<'_>, per_param_prob: f64, rng: &mut R) {
        self.mutate_node_parameters(ctx, per_param_prob, rng);
        self.mutate_globals(ctx, per_param_prob, rng);
    }

    pub fn mutate_node_parameters<R: Rng + ?Sized>(&mut self, ctx: &GenomeContext<'_>, per_param_prob: f64, rng: &mut R) {
        let p = per_param_prob.clamp(0.0, 1.0);
        for node in &mut self.nodes {
            match &mut node.payload {
                NodePayload::Params(table) => mutate_table(table, &ctx.space.module_params, p, rng),
                NodePayload::SpeciesPointer(species) => {
                    if rng.random_bool(p) {
                        if let Some(s) = ctx.module_species.choose(rng) {
                            *species = *s;
                        }
                    }
                }
            }
        }
    }

    pub fn mutate_globals<R: Rng + ?Sized>(&mut self, ctx: &GenomeContext<'_>, per_param_prob: f64, rng: &mut R) {
        if let Some(globals) = &mut self.globals {
            mutate_table(globals, &ctx.space.blueprint_globals, per_param_prob.clamp(0.0, 1.0), rng);
        }
    }
}

/// Crossover settings.
#[derive(Debug, Clone, Copy)]
pub struct CrossoverOptions {
    /// Probability an edge disabled in either parent stays disabled.
    pub disabled_keep_prob: f64,
    /// When false, node payloads come from the fitter parent only; globals
    /// still cross over (hyperparameter-only mode).
    pub node_parameters: bool,
}

impl Default for CrossoverOptions {
    fn default() -> Self {
        Self {
            disabled_keep_prob: 0.75,
            node_parameters: true,
        }
    }
}

/// NEAT crossover aligned on innovation numbers. Matching genes come from a
/// random parent; disjoint and excess genes from the fitter one (ties favour
/// `a`). The child gets id `child_id` and no fitness.
pub fn crossover<R: Rng + ?Sized>(
    a: &ChromosomeGraph,
    b: &ChromosomeGraph,
    child_id: u64,
    options: CrossoverOptions,
    rng: &mut R,
) -> Result<ChromosomeGraph> {
    if a.kind != b.kind {
        return Err(Error::KindMismatch);
    }
    let fa = a.fitness.ok_or(Error::MissingFitness(a.id))?;
    let fb = b.fitness.ok_or(Error::MissingFitness(b.id))?;
    let (fitter, other) = if fa >= fb { (a, b) } else { (b, a) };

    let nodes = fitter
        .nodes
        .iter()
        .map(|n| match other.node(n.innovation) {
            Some(m) if options.node_parameters && rng.random_bool(0.5) => m.clone(),
            _ => n.clone(),
        })
        .collect();

    let edges = fitter
        .edges
        .iter()
        .map(|e| {
            let matching = other
                .edges
                .binary_search_by_key(&e.innovation, |x| x.innovation)
                .ok()
                .map(|i| other.edges[i]);
            let mut child = *e;
            if !e.enabled || matching.is_some_and(|m| !m.enabled) {
                child.enabled = !rng.random_bool(options.disabled_keep_prob.clamp(0.0, 1.0));
            }
            child
        })
        .collect();

    let globals = match (&fitter.globals, &other.globals) {
        (Some(gf), Some(go)) => Some(
            gf.iter()
                .map(|(k, v)| match go.get(k) {
                    Some(w) if rng.random_bool(0.5) => (k.clone(), w.clone()),
                    _ => (k.clone(), v.clone()),
                })
                .collect(),
        ),
        (g, _) => g.clone(),
    };

    let mut child = ChromosomeGraph {
        id: child_id,
        kind: fitter.kind,
        nodes,
        edges,
        globals,
        fitness: None,
        secondary: None,
    };
    child.sort_genes();
    Ok(child)
}
