//! Species bookkeeping, proportional offspring allocation and reproduction.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::genome::{
    compatibility_distance, crossover, ChromosomeGraph, ChromosomeKind, CompatibilityCoefficients, CrossoverOptions, GenomeContext,
    InnovationRegistry, SearchSpace,
};
use crate::multiobjective::survivors;
use crate::Result;

/// Floor on a species' allocation weight so the weakest still gets a share.
pub const ALLOCATION_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Species {
    pub id: u64,
    pub representative: ChromosomeGraph,
    /// Ranked best-first once fitness is known.
    pub members: Vec<ChromosomeGraph>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_fitness: Option<f64>,
    /// Generations since `best_fitness` last improved.
    pub staleness: u32,
}

impl Species {
    pub fn mean_fitness(&self) -> Option<f64> {
        let f: Vec<f64> = self.members.iter().filter_map(|m| m.fitness).collect();
        (!f.is_empty()).then(|| f.iter().sum::<f64>() / f.len() as f64)
    }

    pub fn max_fitness(&self) -> Option<f64> {
        self.members.iter().filter_map(|m| m.fitness).reduce(f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub kind: ChromosomeKind,
    /// Sorted by id.
    pub species: Vec<Species>,
    pub target_species_count: usize,
    pub compatibility_threshold: f64,
    pub next_species_id: u64,
}

impl Population {
    pub fn new(kind: ChromosomeKind, target_species_count: usize, compatibility_threshold: f64) -> Self {
        Self {
            kind,
            species: Vec::new(),
            target_species_count,
            compatibility_threshold,
            next_species_id: 1,
        }
    }

    pub fn members(&self) -> impl Iterator<Item = &ChromosomeGraph> {
        self.species.iter().flat_map(|s| s.members.iter())
    }

    pub fn members_mut(&mut self) -> impl Iterator<Item = &mut ChromosomeGraph> {
        self.species.iter_mut().flat_map(|s| s.members.iter_mut())
    }

    pub fn size(&self) -> usize {
        self.species.iter().map(|s| s.members.len()).sum()
    }

    pub fn species_ids(&self) -> Vec<u64> {
        self.species.iter().map(|s| s.id).collect()
    }

    pub fn species(&self, id: u64) -> Option<&Species> {
        self.species.iter().find(|s| s.id == id)
    }

    /// Assigns each chromosome to the first species (lowest id) whose
    /// representative lies within the threshold, founding a new species
    /// otherwise. Empty species disappear, survivors keep their ids and take
    /// their first member as the next representative, and the threshold
    /// moves 10% toward the target species count.
    pub fn speciate(&mut self, chromosomes: Vec<ChromosomeGraph>, coefficients: &CompatibilityCoefficients, space: &SearchSpace) {
        for s in &mut self.species {
            s.members.clear();
        }
        for c in chromosomes {
            let home = self
                .species
                .iter()
                .position(|s| compatibility_distance(&s.representative, &c, coefficients, space) < self.compatibility_threshold);
            match home {
                Some(i) => self.species[i].members.push(c),
                None => {
                    let id = self.next_species_id;
                    self.next_species_id += 1;
                    self.species.push(Species {
                        id,
                        representative: c.clone(),
                        members: alloc::vec![c],
                        best_fitness: None,
                        staleness: 0,
                    });
                }
            }
        }
        self.species.retain(|s| !s.members.is_empty());
        for s in &mut self.species {
            s.representative = s.members[0].clone();
        }
        let count = self.species.len();
        if count < self.target_species_count {
            self.compatibility_threshold *= 0.9;
        } else if count > self.target_species_count {
            self.compatibility_threshold *= 1.1;
        }
    }

    /// Advances each species' staleness counter from its current members.
    pub fn update_staleness(&mut self) {
        for s in &mut self.species {
            match (s.max_fitness(), s.best_fitness) {
                (Some(now), Some(best)) if now <= best => s.staleness += 1,
                (Some(now), _) => {
                    s.best_fitness = Some(now);
                    s.staleness = 0;
                }
                (None, _) => s.staleness += 1,
            }
        }
    }
}

/// Offspring counts proportional to `max(mean - baseline, ε)` with
/// largest-remainder rounding (ties to the lower index). Ineligible species
/// get nothing; eligible ones get at least one when `total` allows. The
/// counts sum to `total` whenever any species is eligible.
pub fn allocate_offspring(means: &[f64], baseline: f64, eligible: &[bool], total: usize) -> Vec<usize> {
    let n = means.len();
    let mut counts = alloc::vec![0usize; n];
    let weights: Vec<f64> = (0..n)
        .map(|i| {
            if eligible.get(i).copied().unwrap_or(true) {
                (means[i] - baseline).max(ALLOCATION_EPSILON)
            } else {
                0.0
            }
        })
        .collect();
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 || total == 0 {
        return counts;
    }
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    for i in 0..n {
        counts[i] = libm::floor(quotas[i]) as usize;
    }
    let mut left = total.saturating_sub(counts.iter().sum());
    let mut by_remainder: Vec<usize> = (0..n).filter(|&i| weights[i] > 0.0).collect();
    by_remainder.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - counts[a] as f64, quotas[b] - counts[b] as f64);
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in by_remainder.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    // every eligible species keeps at least one slot, taken from the largest
    for i in 0..n {
        if weights[i] > 0.0 && counts[i] == 0 {
            let donor = (0..n)
                .filter(|&j| counts[j] > 1)
                .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)));
            if let Some(d) = donor {
                counts[d] -= 1;
                counts[i] = 1;
            }
        }
    }
    counts
}

/// Reproduction settings shared by every species of a population.
#[derive(Debug, Clone, Copy)]
pub struct ReproductionParams {
    pub truncation_fraction: f64,
    /// Top fraction of the ranked species copied unchanged; at least one.
    pub elite_fraction: f64,
    pub tournament_size: usize,
    pub crossover_prob: f64,
    pub add_node_prob: f64,
    pub add_connection_prob: f64,
    pub param_mutation_prob: f64,
    pub disabled_keep_prob: f64,
    /// Only blueprint globals vary; structure and node tables are frozen.
    pub hyperparameter_only: bool,
}

/// How many top-ranked members of a species of `n` pass on unchanged.
pub fn elite_count(n: usize, elite_fraction: f64) -> usize {
    ((n as f64 * elite_fraction.clamp(0.0, 1.0)).floor() as usize).max(1)
}

/// Best-ranked of `size` uniform draws (with replacement) from `0..n`.
fn tournament<R: Rng + ?Sized>(n: usize, size: usize, rng: &mut R) -> usize {
    (0..size.max(1)).map(|_| rng.random_range(0..n)).min().unwrap_or(0)
}

fn cross_globals<R: Rng + ?Sized>(a: &ChromosomeGraph, b: &ChromosomeGraph, child_id: u64, rng: &mut R) -> Result<ChromosomeGraph> {
    if a.kind != b.kind {
        return Err(crate::Error::KindMismatch);
    }
    let fa = a.fitness.ok_or(crate::Error::MissingFitness(a.id))?;
    let fb = b.fitness.ok_or(crate::Error::MissingFitness(b.id))?;
    let (fitter, other) = if fa >= fb { (a, b) } else { (b, a) };
    let mut child = fitter.clone();
    child.id = child_id;
    child.fitness = None;
    child.secondary = None;
    if let (Some(g), Some(o)) = (&mut child.globals, &other.globals) {
        for (k, v) in g.iter_mut() {
            if let Some(w) = o.get(k) {
                if rng.random_bool(0.5) {
                    *v = w.clone();
                }
            }
        }
    }
    Ok(child)
}

/// Next-generation members bred from one ranked species. The bottom
/// `truncation_fraction` is dropped, the top member is carried over
/// unchanged, and the rest come from tournament-selected survivors via
/// crossover or cloning followed by gated mutation. New chromosomes take
/// ids from `next_id`.
#[allow(clippy::too_many_arguments)]
pub fn reproduce_species<R: Rng + ?Sized>(
    ranked: &[ChromosomeGraph],
    offspring_count: usize,
    params: &ReproductionParams,
    ctx: &GenomeContext<'_>,
    registry: &mut InnovationRegistry,
    next_id: &mut u64,
    rng: &mut R,
) -> Result<Vec<ChromosomeGraph>> {
    let mut out = Vec::with_capacity(offspring_count);
    if offspring_count == 0 || ranked.is_empty() {
        return Ok(out);
    }
    let parents = &ranked[..survivors(ranked.len(), params.truncation_fraction)];
    let elites = elite_count(ranked.len(), params.elite_fraction)
        .min(parents.len())
        .min(offspring_count);
    out.extend(parents[..elites].iter().cloned());
    let options = CrossoverOptions {
        disabled_keep_prob: params.disabled_keep_prob,
        node_parameters: !params.hyperparameter_only,
    };
    while out.len() < offspring_count {
        let id = *next_id;
        *next_id += 1;
        let a = &parents[tournament(parents.len(), params.tournament_size, rng)];
        let mut child = if rng.random_bool(params.crossover_prob.clamp(0.0, 1.0)) {
            let b = &parents[tournament(parents.len(), params.tournament_size, rng)];
            if params.hyperparameter_only {
                cross_globals(a, b, id, rng)?
            } else {
                crossover(a, b, id, options, rng)?
            }
        } else {
            let mut c = a.clone();
            c.id = id;
            c.fitness = None;
            c.secondary = None;
            c
        };
        if !params.hyperparameter_only {
            if rng.random_bool(params.add_node_prob.clamp(0.0, 1.0)) {
                child.mutate_add_node(ctx, registry, rng)?;
            }
            if rng.random_bool(params.add_connection_prob.clamp(0.0, 1.0)) {
                child.mutate_add_connection(registry, rng);
            }
            child.mutate_node_parameters(ctx, params.param_mutation_prob, rng);
        }
        child.mutate_globals(ctx, params.param_mutation_prob, rng);
        out.push(child);
    }
    Ok(out)
}

/// Breeds a whole population of `total` from its ranked species: updates
/// staleness, allocates offspring (stale species get nothing unless they
/// hold the population best) and reproduces each species in id order.
/// Members must be ranked and carry fitness.
#[allow(clippy::too_many_arguments)]
pub fn reproduce_population<R: Rng + ?Sized>(
    population: &mut Population,
    total: usize,
    staleness_limit: u32,
    params: &ReproductionParams,
    ctx: &GenomeContext<'_>,
    registry: &mut InnovationRegistry,
    next_id: &mut u64,
    rng: &mut R,
) -> Result<Vec<ChromosomeGraph>> {
    population.update_staleness();
    let means: Vec<f64> = population.species.iter().map(|s| s.mean_fitness().unwrap_or(0.0)).collect();
    let baseline = population.members().filter_map(|m| m.fitness).reduce(f64::min).unwrap_or(0.0);
    let best = population
        .species
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.max_fitness().map(|f| (i, f)))
        .fold(None, |acc: Option<(usize, f64)>, (i, f)| match acc {
            Some((_, g)) if g >= f => acc,
            _ => Some((i, f)),
        })
        .map(|(i, _)| i);
    let eligible: Vec<bool> = population
        .species
        .iter()
        .enumerate()
        .map(|(i, s)| s.staleness < staleness_limit || Some(i) == best)
        .collect();
    let counts = allocate_offspring(&means, baseline, &eligible, total);
    let mut next = Vec::with_capacity(total);
    for (s, &count) in population.species.iter().zip(&counts) {
        next.extend(reproduce_species(&s.members, count, params, ctx, registry, next_id, rng)?);
    }
    Ok(next)
}
