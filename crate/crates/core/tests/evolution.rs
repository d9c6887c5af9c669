use coevo_core::assembly::assemble;
use coevo_core::coevolution::CoevolutionState;
use coevo_core::config::{ObjectiveMode, RunConfig};
use coevo_core::evaluation::{surrogate_fitness, SequentialEvaluator, SurrogateConfig, SurrogateEvaluator};
use coevo_core::network::{count_parameters, deserialize_network, serialize_network, validate_dag};
use coevo_core::speciation::elite_count;
use coevo_core::EngineRng;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;

fn small(seed: u64, chest: bool) -> RunConfig {
    let mut cfg = if chest { RunConfig::chest_xray() } else { RunConfig::wikidetox() };
    cfg.evolution.seed = seed;
    cfg.evolution.module_population_size = 20;
    cfg.evolution.blueprint_population_size = 8;
    cfg.evolution.assembled_population_size = 24;
    cfg.evolution.generations = 6;
    cfg
}

fn surrogate(cfg: &RunConfig) -> SequentialEvaluator<SurrogateEvaluator> {
    SequentialEvaluator(SurrogateEvaluator::new(SurrogateConfig::for_space(&cfg.search_space)))
}

#[test]
fn elite_count_floors_with_a_minimum_of_one() {
    assert_eq!(elite_count(10, 0.0), 1);
    assert_eq!(elite_count(10, 0.25), 2);
    assert_eq!(elite_count(10, 1.0), 10);
    assert_eq!(elite_count(3, 0.5), 1);
}

#[test]
fn populations_keep_their_sizes() {
    let cfg = small(3, false);
    let mut state = CoevolutionState::new(cfg.clone()).unwrap();
    let mut eval = surrogate(&cfg);
    while !state.is_finished() {
        let out = state.evolve_generation(&mut eval).unwrap();
        assert_eq!(out.networks.len(), cfg.evolution.assembled_population_size);
        assert_eq!(state.modules.size(), cfg.evolution.module_population_size);
        assert_eq!(state.blueprints.size(), cfg.evolution.blueprint_population_size);
        let counted: usize = out.report.species_counts["modules"].values().sum();
        assert_eq!(counted, cfg.evolution.module_population_size);
    }
}

#[test]
fn checkpoint_round_trip_continues_identically() {
    let cfg = small(11, true);
    let mut a = CoevolutionState::new(cfg.clone()).unwrap();
    let mut eval = surrogate(&cfg);
    for _ in 0..3 {
        a.evolve_generation(&mut eval).unwrap();
    }
    let mut b = CoevolutionState::from_checkpoint_json(&a.to_checkpoint_json().unwrap()).unwrap();
    assert_eq!(a, b);
    for _ in 0..3 {
        assert_eq!(a.evolve_generation(&mut eval).unwrap(), b.evolve_generation(&mut eval).unwrap());
    }
}

#[test]
fn multiobjective_records_carry_front_indices() {
    let mut cfg = small(5, false);
    cfg.objectives.mode = ObjectiveMode::Multi;
    let mut state = CoevolutionState::new(cfg.clone()).unwrap();
    let out = state.evolve_generation(&mut surrogate(&cfg)).unwrap();
    for a in &out.networks {
        for b in &out.networks {
            let (p, q) = (a.objectives(), b.objectives());
            if coevo_core::multiobjective::dominates(&p, &q) {
                assert!(a.front_index < b.front_index, "{} dominates {}", a.network_id, b.network_id);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn assembled_networks_are_valid_and_round_trip(seed in 0u64..1_000, chest in any::<bool>(), gens in 0u32..4) {
        let cfg = small(seed, chest);
        let mut state = CoevolutionState::new(cfg.clone()).unwrap();
        let mut eval = surrogate(&cfg);
        for _ in 0..gens {
            state.evolve_generation(&mut eval).unwrap();
        }
        let mut rng = EngineRng::seed_from_u64(seed);
        for bp in state.blueprints.members() {
            let net = assemble(bp, &state.modules, &cfg.search_space, &mut rng).unwrap().network;
            prop_assert!(validate_dag(&net).is_ok());
            let bytes = serialize_network(&net).unwrap();
            let back = deserialize_network(&bytes).unwrap();
            prop_assert_eq!(serialize_network(&back).unwrap(), bytes);
            prop_assert_eq!(count_parameters(&back, None).unwrap(), count_parameters(&net, None).unwrap());
        }
    }

    #[test]
    fn surrogate_ignores_layer_order(seed in 0u64..1_000) {
        let cfg = small(seed, seed % 2 == 0);
        let state = CoevolutionState::new(cfg.clone()).unwrap();
        let mut rng = EngineRng::seed_from_u64(seed);
        let bp = state.blueprints.members().next().unwrap();
        let net = assemble(bp, &state.modules, &cfg.search_space, &mut rng).unwrap().network;
        let mut shuffled = net.clone();
        shuffled.layers.shuffle(&mut rng);
        let sc = SurrogateConfig::for_space(&cfg.search_space);
        prop_assert_eq!(surrogate_fitness(&net, &sc).unwrap(), surrogate_fitness(&shuffled, &sc).unwrap());
        prop_assert_eq!(serialize_network(&net).unwrap(), serialize_network(&shuffled).unwrap());
    }
}
