//! The generation loop: assemble, evaluate, attribute, rank, reproduce.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_networks, AssembledNetwork};
use crate::config::{ObjectiveMode, RunConfig};
use crate::evaluation::{BatchEvaluator, EvaluationResult, EvaluationStatus, EvaluationTask};
use crate::genome::{ChromosomeGraph, ChromosomeKind, GenomeContext, InnovationRegistry, SearchSpace};
use crate::multiobjective::{front_indices, rank_by_fronts, ObjectiveVector};
use crate::network::{count_parameters, serialize_network, validate_dag};
use crate::speciation::{reproduce_population, Population, ReproductionParams};
use crate::{EngineRng, Error, Result};

/// Per-generation summary; one JSON line in the generation log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub generation: u32,
    /// Highest primary objective among this generation's networks.
    pub best_fitness: f64,
    pub mean_fitness: f64,
    /// Smallest parameter count among successfully evaluated networks.
    pub best_secondary: f64,
    /// `"modules"` / `"blueprints"` -> species id -> member count, after
    /// reproduction.
    pub species_counts: BTreeMap<String, BTreeMap<u64, usize>>,
    pub evaluation_failures: usize,
    /// Chromosomes that appeared in no network and were ranked on their
    /// species' mean instead.
    pub unevaluated: usize,
    /// Sum of evaluator-reported durations, in seconds.
    pub wall_time: f64,
}

/// One evaluated network, as logged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub network_id: String,
    pub blueprint_id: u64,
    /// Species id -> module id.
    pub module_choices: BTreeMap<u64, u64>,
    pub primary: f64,
    pub raw_secondary: f64,
    pub status: EvaluationStatus,
    /// 0-based Pareto front within the generation.
    pub front_index: usize,
    /// The best network so far, re-submitted.
    pub carried_elite: bool,
}

impl NetworkRecord {
    pub fn objectives(&self) -> ObjectiveVector {
        ObjectiveVector::minimizing(self.primary, self.raw_secondary)
    }

    pub fn contributors(&self) -> impl Iterator<Item = u64> + '_ {
        core::iter::once(self.blueprint_id).chain(self.module_choices.values().copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationOutcome {
    pub report: GenerationReport,
    /// In assembly order.
    pub networks: Vec<NetworkRecord>,
    /// Chromosome id -> attributed (primary, maximize-form secondary), for
    /// every chromosome that appeared in at least one network.
    pub attributed: BTreeMap<u64, (f64, f64)>,
}

/// The best network seen so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliteNetwork {
    pub network: AssembledNetwork,
    pub network_id: String,
    pub objectives: ObjectiveVector,
}

/// Everything needed to continue a run; serialized whole into checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoevolutionState {
    pub config: RunConfig,
    /// Index of the next generation to run.
    pub generation: u32,
    pub modules: Population,
    pub blueprints: Population,
    pub registry: InnovationRegistry,
    pub rng: EngineRng,
    pub next_chromosome_id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elite: Option<EliteNetwork>,
}

/// Means of the primary and maximize-form secondary objectives over the
/// networks containing each chromosome, summed in network order.
pub fn attribution_table(networks: &[AssembledNetwork]) -> BTreeMap<u64, (f64, f64)> {
    let mut sums: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
    for n in networks {
        let Some(o) = n.objectives else { continue };
        for id in n.contributors() {
            let e = sums.entry(id).or_insert((0.0, 0.0, 0));
            e.0 += o.primary;
            e.1 += o.secondary;
            e.2 += 1;
        }
    }
    sums.into_iter().map(|(id, (p, s, k))| (id, (p / k as f64, s / k as f64))).collect()
}

/// Sets each chromosome's fitness and secondary to the mean over the
/// networks containing it. Chromosomes in no network keep what they had.
pub fn attribute_fitness(
    networks: &[AssembledNetwork],
    blueprints: &mut Population,
    modules: &mut Population,
) -> BTreeMap<u64, (f64, f64)> {
    let table = attribution_table(networks);
    for c in blueprints.members_mut().chain(modules.members_mut()) {
        if let Some(&(p, s)) = table.get(&c.id) {
            c.fitness = Some(p);
            c.secondary = Some(s);
        }
    }
    table
}

/// Fills missing objectives with the species mean (or `floor`), then
/// orders every species best-first. Returns how many were filled.
fn rank_population(population: &mut Population, mode: ObjectiveMode, secondary_sort: bool, floor: f64) -> usize {
    let mut filled = 0;
    for s in &mut population.species {
        let mean = |f: &dyn Fn(&ChromosomeGraph) -> Option<f64>| {
            let v: Vec<f64> = s.members.iter().filter_map(f).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        let fit = mean(&|c| c.fitness).unwrap_or(floor);
        let sec = mean(&|c| c.secondary).unwrap_or(0.0);
        for c in &mut s.members {
            if c.fitness.is_none() {
                c.fitness = Some(fit);
                filled += 1;
            }
            if c.secondary.is_none() {
                c.secondary = Some(sec);
            }
        }
        match mode {
            ObjectiveMode::Single => {
                s.members
                    .sort_by(|a, b| b.fitness.unwrap_or(floor).total_cmp(&a.fitness.unwrap_or(floor)));
            }
            ObjectiveMode::Multi => {
                let points: Vec<ObjectiveVector> = s
                    .members
                    .iter()
                    .map(|c| ObjectiveVector {
                        primary: c.fitness.unwrap_or(floor),
                        secondary: c.secondary.unwrap_or(0.0),
                        raw_secondary: -c.secondary.unwrap_or(0.0),
                    })
                    .collect();
                let order = rank_by_fronts(&points, secondary_sort);
                let mut old: Vec<Option<ChromosomeGraph>> = core::mem::take(&mut s.members).into_iter().map(Some).collect();
                s.members = order.into_iter().filter_map(|i| old[i].take()).collect();
            }
        }
    }
    filled
}

impl CoevolutionState {
    /// Minimal random populations, speciated, for generation 0.
    pub fn new(config: RunConfig) -> Result<Self> {
        let issues = config.validate();
        if let Some(first) = issues.first() {
            return Err(Error::Config(format!("{first}")));
        }
        let ev = &config.evolution;
        let space = config.search_space.to_search_space();
        let mut rng = EngineRng::seed_from_u64(ev.seed);
        let mut registry = InnovationRegistry::new();
        let mut next_id = 1u64;

        let mut modules = Population::new(ChromosomeKind::Module, ev.module_species_target, ev.initial_compatibility_threshold);
        let ctx = GenomeContext {
            space: &space,
            module_species: &[],
        };
        let fresh: Vec<ChromosomeGraph> = (0..ev.module_population_size)
            .map(|_| {
                next_id += 1;
                ChromosomeGraph::new_minimal(ChromosomeKind::Module, next_id - 1, &ctx, &mut registry, &mut rng)
            })
            .collect::<Result<_>>()?;
        modules.speciate(fresh, &ev.compatibility, &space);

        let species = modules.species_ids();
        let ctx = GenomeContext {
            space: &space,
            module_species: &species,
        };
        let mut blueprints = Population::new(
            ChromosomeKind::Blueprint,
            ev.blueprint_species_target,
            ev.initial_compatibility_threshold,
        );
        let fresh: Vec<ChromosomeGraph> = (0..ev.blueprint_population_size)
            .map(|_| {
                next_id += 1;
                ChromosomeGraph::new_minimal(ChromosomeKind::Blueprint, next_id - 1, &ctx, &mut registry, &mut rng)
            })
            .collect::<Result<_>>()?;
        blueprints.speciate(fresh, &ev.compatibility, &space);

        Ok(Self {
            config,
            generation: 0,
            modules,
            blueprints,
            registry,
            rng,
            next_chromosome_id: next_id,
            elite: None,
        })
    }

    /// Freezes structure and node tables so only blueprint globals evolve.
    /// Only allowed before the first generation.
    pub fn set_hyperparameter_only_mode(&mut self, enabled: bool) -> Result<()> {
        if self.generation > 0 {
            return Err(Error::ModeLocked);
        }
        self.config.evolution.hyperparameter_only = enabled;
        Ok(())
    }

    pub fn search_space(&self) -> SearchSpace {
        self.config.search_space.to_search_space()
    }

    pub fn is_finished(&self) -> bool {
        self.generation >= self.config.evolution.generations
    }

    fn reproduction_params(&self, kind: ChromosomeKind) -> ReproductionParams {
        let ev = &self.config.evolution;
        let (add_node_prob, add_connection_prob) = match kind {
            ChromosomeKind::Module => (ev.module_add_node_prob, ev.module_add_connection_prob),
            ChromosomeKind::Blueprint => (ev.blueprint_add_node_prob, ev.blueprint_add_connection_prob),
        };
        ReproductionParams {
            truncation_fraction: ev.truncation_fraction,
            elite_fraction: ev.elite_fraction,
            tournament_size: ev.tournament_size,
            crossover_prob: ev.crossover_prob,
            add_node_prob,
            add_connection_prob,
            param_mutation_prob: ev.param_mutation_prob,
            disabled_keep_prob: ev.disabled_keep_prob,
            hyperparameter_only: ev.hyperparameter_only,
        }
    }

    /// Runs one full generation against `evaluator`.
    pub fn evolve_generation(&mut self, evaluator: &mut dyn BatchEvaluator) -> Result<GenerationOutcome> {
        let gen = self.generation;
        let ev = self.config.evolution.clone();
        let floor = ev.failure_fitness;
        self.registry.begin_generation();

        // assemble; the elite (if any) takes the last slot
        let carried = if ev.carry_elite_network { self.elite.clone() } else { None };
        let fresh = ev.assembled_population_size - usize::from(carried.is_some());
        let blueprint_refs: Vec<&ChromosomeGraph> = self.blueprints.members().collect();
        let mut networks = assemble_networks(&blueprint_refs, &self.modules, fresh, &self.config.search_space, &mut self.rng)?;
        if let Some(e) = &carried {
            let mut n = e.network.clone();
            n.objectives = None;
            networks.push(n);
        }

        // local checks and parameter counts; invalid networks never leave
        let mut params: Vec<Option<u64>> = Vec::with_capacity(networks.len());
        let mut tasks = Vec::new();
        let mut ids = Vec::with_capacity(networks.len());
        for (i, n) in networks.iter().enumerate() {
            let id = format!("g{gen}-n{i}");
            let ok = validate_dag(&n.network).is_ok();
            let count = if ok { count_parameters(&n.network, None).ok() } else { None };
            if count.is_some() {
                let bytes = serialize_network(&n.network)?;
                tasks.push(EvaluationTask {
                    task_id: id.clone(),
                    network_json: String::from_utf8(bytes).map_err(|e| Error::Decode(format!("{e}")))?,
                    train_config: self.config.train.clone(),
                    submitted_at: 0.0,
                });
            }
            params.push(count);
            ids.push(id);
        }

        let mut results: BTreeMap<String, EvaluationResult> = BTreeMap::new();
        for r in evaluator.evaluate_batch(&tasks) {
            results.entry(r.task_id.clone()).or_insert(r);
        }
        let wall_time: f64 = results.values().map(|r| r.duration).sum();

        let worst_params = params.iter().flatten().copied().max().unwrap_or(0) as f64;
        let mut failures = 0;
        let mut statuses = Vec::with_capacity(networks.len());
        for (i, n) in networks.iter_mut().enumerate() {
            let result = results.get(&ids[i]).filter(|r| r.is_ok());
            let objectives = match (result, params[i]) {
                (Some(r), Some(p)) => {
                    statuses.push(EvaluationStatus::Ok);
                    ObjectiveVector::minimizing(r.primary, p as f64)
                }
                _ => {
                    failures += 1;
                    statuses.push(EvaluationStatus::Failed);
                    ObjectiveVector::minimizing(floor, params[i].map_or(worst_params, |p| p as f64))
                }
            };
            n.objectives = Some(objectives);
        }

        let attributed = attribute_fitness(&networks, &mut self.blueprints, &mut self.modules);

        let points: Vec<ObjectiveVector> = networks.iter().filter_map(|n| n.objectives).collect();
        let fronts = front_indices(&points);
        let records: Vec<NetworkRecord> = networks
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let o = n.objectives.unwrap_or_else(|| ObjectiveVector::minimizing(floor, 0.0));
                NetworkRecord {
                    network_id: ids[i].clone(),
                    blueprint_id: n.blueprint_id,
                    module_choices: n.module_choices.clone(),
                    primary: o.primary,
                    raw_secondary: o.raw_secondary,
                    status: statuses[i],
                    front_index: fronts[i],
                    carried_elite: carried.is_some() && i == networks.len() - 1,
                }
            })
            .collect();

        // elite: strictly better primary replaces it
        let best = (0..networks.len())
            .filter(|&i| statuses[i] == EvaluationStatus::Ok)
            .fold(None, |acc: Option<usize>, i| match acc {
                Some(j) if points[j].primary >= points[i].primary => Some(j),
                _ => Some(i),
            });
        if let Some(b) = best {
            let better = self.elite.as_ref().is_none_or(|e| points[b].primary > e.objectives.primary);
            if better {
                self.elite = Some(EliteNetwork {
                    network: networks[b].clone(),
                    network_id: ids[b].clone(),
                    objectives: points[b],
                });
            }
        }

        let best_fitness = points.iter().map(|o| o.primary).reduce(f64::max).unwrap_or(floor);
        let mean_fitness = if points.is_empty() {
            floor
        } else {
            points.iter().map(|o| o.primary).sum::<f64>() / points.len() as f64
        };
        let best_secondary = (0..points.len())
            .filter(|&i| statuses[i] == EvaluationStatus::Ok)
            .map(|i| points[i].raw_secondary)
            .reduce(f64::min)
            .unwrap_or(0.0);

        // rank, then breed modules first so blueprints can point at the new species
        let mode = self.config.objectives.mode;
        let secondary_sort = self.config.objectives.secondary_sort;
        let unevaluated = rank_population(&mut self.modules, mode, secondary_sort, floor)
            + rank_population(&mut self.blueprints, mode, secondary_sort, floor);

        let space = self.search_space();
        let module_params = self.reproduction_params(ChromosomeKind::Module);
        let blueprint_params = self.reproduction_params(ChromosomeKind::Blueprint);
        let ctx = GenomeContext {
            space: &space,
            module_species: &[],
        };
        let next_modules = reproduce_population(
            &mut self.modules,
            ev.module_population_size,
            ev.staleness_limit,
            &module_params,
            &ctx,
            &mut self.registry,
            &mut self.next_chromosome_id,
            &mut self.rng,
        )?;
        self.modules.speciate(next_modules, &ev.compatibility, &space);

        let species = self.modules.species_ids();
        let ctx = GenomeContext {
            space: &space,
            module_species: &species,
        };
        let next_blueprints = reproduce_population(
            &mut self.blueprints,
            ev.blueprint_population_size,
            ev.staleness_limit,
            &blueprint_params,
            &ctx,
            &mut self.registry,
            &mut self.next_chromosome_id,
            &mut self.rng,
        )?;
        self.blueprints.speciate(next_blueprints, &ev.compatibility, &space);

        let counts = |p: &Population| p.species.iter().map(|s| (s.id, s.members.len())).collect();
        let mut species_counts = BTreeMap::new();
        species_counts.insert(String::from("modules"), counts(&self.modules));
        species_counts.insert(String::from("blueprints"), counts(&self.blueprints));

        self.generation += 1;
        Ok(GenerationOutcome {
            report: GenerationReport {
                generation: gen,
                best_fitness,
                mean_fitness,
                best_secondary,
                species_counts,
                evaluation_failures: failures,
                unevaluated,
                wall_time,
            },
            networks: records,
            attributed,
        })
    }

    pub fn to_checkpoint_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Decode(format!("{e}")))
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Self> {
        let state: Self = serde_json::from_str(text).map_err(|e| Error::Decode(format!("{e}")))?;
        for c in state.modules.members().chain(state.blueprints.members()) {
            c.validate(None)?;
        }
        Ok(state)
    }
}
