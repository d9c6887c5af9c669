//! Run configuration schema, domain presets and validation.
//!
//! Every field has a default so a config file only needs to name what it
//! changes. The two presets mirror the text-toxicity and chest-radiograph
//! settings: 56 modules in 4 species, 22 blueprints in 1 species, 100
//! assembled networks per generation.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::evaluation::SurrogateConfig;
use crate::genome::{CompatibilityCoefficients, HyperparameterSpec, SearchSpace};

/// Names of the module hyperparameters the assembler understands.
pub mod param_names {
    pub const LAYER_TYPE: &str = "layer_type";
    pub const WIDTH: &str = "width";
    pub const KERNEL_SIZE: &str = "kernel_size";
    pub const ACTIVATION: &str = "activation";
    pub const INITIALIZER: &str = "initializer";
    pub const DROPOUT_RATE: &str = "dropout_rate";
    pub const WEIGHT_DECAY: &str = "weight_decay";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayerSearchSpace {
    /// Op kinds a module node may become (`conv1d`, `conv2d`, `lstm`, `gru`, `dense`, `dropout`).
    pub layer_types: Vec<String>,
    pub layer_width: [i64; 2],
    pub kernel_sizes: Vec<i64>,
    pub activations: Vec<String>,
    pub initializers: Vec<String>,
    pub dropout_rate: [f64; 2],
    pub weight_decay: [f64; 2],
    pub min_pooling_layers: usize,
    pub weight_sharing: bool,
    /// Input tensor shape without the batch dimension.
    pub input_shape: Vec<usize>,
    pub output_units: usize,
    /// Blueprint globals (learning rate, optimizer, ...).
    pub globals: Vec<HyperparameterSpec>,
    pub mutation_sigma_fraction: f64,
}

impl Default for LayerSearchSpace {
    fn default() -> Self {
        Self::wikidetox()
    }
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn default_globals() -> Vec<HyperparameterSpec> {
    vec![
        HyperparameterSpec::real("learning_rate", 1e-4, 1e-2),
        HyperparameterSpec::categorical("optimizer", &["adam", "sgd", "rmsprop"]),
        HyperparameterSpec::integer("batch_size", 16, 128),
    ]
}

impl LayerSearchSpace {
    pub fn wikidetox() -> Self {
        Self {
            layer_types: strings(&["conv1d", "lstm", "gru", "dropout"]),
            layer_width: [64, 192],
            kernel_sizes: vec![1, 3, 5, 7],
            activations: strings(&["relu", "linear", "elu", "selu"]),
            initializers: strings(&["glorot", "he"]),
            dropout_rate: [0.0, 0.5],
            weight_decay: [1e-9, 1e-3],
            min_pooling_layers: 5,
            weight_sharing: false,
            input_shape: vec![128, 64],
            output_units: 2,
            globals: default_globals(),
            mutation_sigma_fraction: 0.1,
        }
    }

    pub fn chest_xray() -> Self {
        Self {
            layer_types: strings(&["conv2d", "dropout"]),
            layer_width: [16, 64],
            kernel_sizes: vec![1, 3],
            activations: strings(&["relu", "linear", "elu", "selu"]),
            initializers: strings(&["glorot", "he"]),
            dropout_rate: [0.0, 0.7],
            weight_decay: [1e-9, 1e-3],
            min_pooling_layers: 4,
            weight_sharing: true,
            input_shape: vec![224, 224, 3],
            output_units: 14,
            globals: default_globals(),
            mutation_sigma_fraction: 0.1,
        }
    }

    /// The generic hyperparameter view used by the genome.
    pub fn to_search_space(&self) -> SearchSpace {
        use param_names::*;
        let kernels: Vec<String> = self.kernel_sizes.iter().map(|k| k.to_string()).collect();
        let sigma = self.mutation_sigma_fraction;
        let module_params = vec![
            HyperparameterSpec::categorical(LAYER_TYPE, &self.layer_types),
            HyperparameterSpec::integer(WIDTH, self.layer_width[0], self.layer_width[1]).with_sigma_fraction(sigma),
            HyperparameterSpec::categorical(KERNEL_SIZE, &kernels),
            HyperparameterSpec::categorical(ACTIVATION, &self.activations),
            HyperparameterSpec::categorical(INITIALIZER, &self.initializers),
            HyperparameterSpec::real(DROPOUT_RATE, self.dropout_rate[0], self.dropout_rate[1]).with_sigma_fraction(sigma),
            HyperparameterSpec::real(WEIGHT_DECAY, self.weight_decay[0], self.weight_decay[1]).with_sigma_fraction(sigma),
        ];
        SearchSpace {
            module_params,
            blueprint_globals: self.globals.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub module_population_size: usize,
    pub blueprint_population_size: usize,
    pub assembled_population_size: usize,
    pub module_species_target: usize,
    pub blueprint_species_target: usize,
    pub module_add_node_prob: f64,
    pub module_add_connection_prob: f64,
    pub blueprint_add_node_prob: f64,
    pub blueprint_add_connection_prob: f64,
    pub crossover_prob: f64,
    /// Per-parameter mutation probability applied to every offspring.
    pub param_mutation_prob: f64,
    pub disabled_keep_prob: f64,
    /// Bottom fraction of each ranked species removed before breeding.
    pub truncation_fraction: f64,
    /// Top fraction of each ranked species copied unchanged into the next
    /// generation (never fewer than one member).
    pub elite_fraction: f64,
    pub tournament_size: usize,
    pub staleness_limit: u32,
    pub compatibility: CompatibilityCoefficients,
    pub initial_compatibility_threshold: f64,
    pub generations: u32,
    pub seed: u64,
    pub hyperparameter_only: bool,
    pub failure_fitness: f64,
    /// Re-submit the best network so far as one of each generation's assemblies.
    pub carry_elite_network: bool,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self::wikidetox()
    }
}

impl EvolutionConfig {
    pub fn wikidetox() -> Self {
        Self {
            module_population_size: 56,
            blueprint_population_size: 22,
            assembled_population_size: 100,
            module_species_target: 4,
            blueprint_species_target: 1,
            module_add_node_prob: 0.05,
            module_add_connection_prob: 0.05,
            blueprint_add_node_prob: 0.05,
            blueprint_add_connection_prob: 0.05,
            crossover_prob: 0.5,
            param_mutation_prob: 0.1,
            disabled_keep_prob: 0.75,
            truncation_fraction: 0.5,
            elite_fraction: 0.0,
            tournament_size: 2,
            staleness_limit: 15,
            compatibility: CompatibilityCoefficients::default(),
            initial_compatibility_threshold: 0.3,
            generations: 30,
            seed: 1,
            hyperparameter_only: false,
            failure_fitness: 0.0,
            carry_elite_network: true,
        }
    }

    pub fn chest_xray() -> Self {
        Self {
            module_add_node_prob: 0.08,
            module_add_connection_prob: 0.08,
            blueprint_add_node_prob: 0.16,
            blueprint_add_connection_prob: 0.12,
            ..Self::wikidetox()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveMode {
    Single,
    Multi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectivesConfig {
    pub mode: ObjectiveMode,
    /// Order each Pareto front by the secondary objective.
    pub secondary_sort: bool,
}

impl Default for ObjectivesConfig {
    fn default() -> Self {
        Self {
            mode: ObjectiveMode::Single,
            secondary_sort: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EvaluatorConfig {
    Surrogate {
        #[serde(default)]
        surrogate: SurrogateConfig,
    },
    NoisySurrogate {
        #[serde(default)]
        surrogate: SurrogateConfig,
        sigma: f64,
        #[serde(default)]
        seed: u64,
    },
    Remote,
}

impl Default for EvaluatorConfig {
    fn default() -> Self {
        EvaluatorConfig::Surrogate {
            surrogate: SurrogateConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistribConfig {
    pub host: String,
    pub port: u16,
    /// Seconds a pulled task may stay in flight before it is requeued.
    pub task_timeout_secs: f64,
    pub max_retries: u32,
    pub idle_timeout_secs: f64,
    /// Upper bound on waiting for one generation's results.
    pub generation_timeout_secs: f64,
}

impl Default for DistribConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 7878,
            task_timeout_secs: 600.0,
            max_retries: 2,
            idle_timeout_secs: 300.0,
            generation_timeout_secs: 86_400.0,
        }
    }
}

/// Pass-through training settings for remote workers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: u32,
    pub dataset: String,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 3,
            dataset: "sequence-parity".into(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub search_space: LayerSearchSpace,
    pub evolution: EvolutionConfig,
    pub objectives: ObjectivesConfig,
    pub evaluator: EvaluatorConfig,
    pub distrib: DistribConfig,
    pub train: TrainConfig,
    pub output_dir: String,
    pub checkpoint_every: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::wikidetox()
    }
}

/// One field-level validation failure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub field: String,
    pub message: String,
}

impl core::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl RunConfig {
    pub fn wikidetox() -> Self {
        Self {
            name: "wikidetox-like".into(),
            search_space: LayerSearchSpace::wikidetox(),
            evolution: EvolutionConfig::wikidetox(),
            objectives: ObjectivesConfig::default(),
            evaluator: EvaluatorConfig::Surrogate {
                surrogate: SurrogateConfig::for_space(&LayerSearchSpace::wikidetox()),
            },
            distrib: DistribConfig::default(),
            train: TrainConfig::default(),
            output_dir: "runs/wikidetox-like".into(),
            checkpoint_every: 1,
        }
    }

    pub fn chest_xray() -> Self {
        Self {
            name: "chest-xray-like".into(),
            search_space: LayerSearchSpace::chest_xray(),
            evolution: EvolutionConfig::chest_xray(),
            objectives: ObjectivesConfig::default(),
            evaluator: EvaluatorConfig::Surrogate {
                surrogate: SurrogateConfig::for_space(&LayerSearchSpace::chest_xray()),
            },
            distrib: DistribConfig::default(),
            train: TrainConfig {
                epochs: 8,
                dataset: "tiny-digits".into(),
                seed: 0,
            },
            output_dir: "runs/chest-xray-like".into(),
            checkpoint_every: 1,
        }
    }

    /// All field-level problems; empty means the config is usable.
    pub fn validate(&self) -> Vec<ConfigIssue> {
        let mut issues = Vec::new();
        let mut push = |field: &str, message: String| {
            issues.push(ConfigIssue {
                field: field.into(),
                message,
            })
        };
        let ev = &self.evolution;
        let probs = [
            ("evolution.module_add_node_prob", ev.module_add_node_prob),
            ("evolution.module_add_connection_prob", ev.module_add_connection_prob),
            ("evolution.blueprint_add_node_prob", ev.blueprint_add_node_prob),
            ("evolution.blueprint_add_connection_prob", ev.blueprint_add_connection_prob),
            ("evolution.crossover_prob", ev.crossover_prob),
            ("evolution.param_mutation_prob", ev.param_mutation_prob),
            ("evolution.disabled_keep_prob", ev.disabled_keep_prob),
        ];
        for (field, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                push(field, format!("probability {p} outside [0, 1]"));
            }
        }
        if !(0.0..=1.0).contains(&ev.elite_fraction) {
            push("evolution.elite_fraction", format!("{} outside [0, 1]", ev.elite_fraction));
        }
        if !(0.0..1.0).contains(&ev.truncation_fraction) {
            push(
                "evolution.truncation_fraction",
                format!("{} outside [0, 1)", ev.truncation_fraction),
            );
        }
        if ev.module_species_target == 0 {
            push("evolution.module_species_target", "must be at least 1".into());
        }
        if ev.blueprint_species_target == 0 {
            push("evolution.blueprint_species_target", "must be at least 1".into());
        }
        if ev.module_population_size < ev.module_species_target.max(1) {
            push(
                "evolution.module_population_size",
                format!(
                    "{} is below the species target {}",
                    ev.module_population_size, ev.module_species_target
                ),
            );
        }
        if ev.blueprint_population_size < ev.blueprint_species_target.max(1) {
            push(
                "evolution.blueprint_population_size",
                format!(
                    "{} is below the species target {}",
                    ev.blueprint_population_size, ev.blueprint_species_target
                ),
            );
        }
        if ev.assembled_population_size < ev.blueprint_population_size {
            push(
                "evolution.assembled_population_size",
                format!(
                    "{} is below the blueprint population {}",
                    ev.assembled_population_size, ev.blueprint_population_size
                ),
            );
        }
        if ev.tournament_size == 0 {
            push("evolution.tournament_size", "must be at least 1".into());
        }
        if !(ev.initial_compatibility_threshold > 0.0) {
            push("evolution.initial_compatibility_threshold", "must be positive".into());
        }
        if !ev.failure_fitness.is_finite() {
            push("evolution.failure_fitness", "must be finite".into());
        }

        let ss = &self.search_space;
        const KNOWN: [&str; 6] = ["conv1d", "conv2d", "dense", "lstm", "gru", "dropout"];
        if ss.layer_types.is_empty() {
            push("search_space.layer_types", "must be non-empty".into());
        }
        for t in &ss.layer_types {
            if !KNOWN.contains(&t.as_str()) {
                push("search_space.layer_types", format!("unknown layer type `{t}`"));
            }
        }
        if ss.input_shape.is_empty() || ss.input_shape.contains(&0) {
            push("search_space.input_shape", "dims must be positive and non-empty".into());
        }
        if ss.output_units == 0 {
            push("search_space.output_units", "must be positive".into());
        }
        if ss.kernel_sizes.iter().any(|k| *k < 1) {
            push("search_space.kernel_sizes", "kernel sizes must be positive".into());
        }
        if ss.layer_width[0] < 1 {
            push("search_space.layer_width", "widths must be positive".into());
        }
        if ss.dropout_rate[1] >= 1.0 {
            push("search_space.dropout_rate", "rates must be below 1".into());
        }
        if let Err(e) = ss.to_search_space().check() {
            push("search_space", format!("{e}"));
        }

        match &self.evaluator {
            EvaluatorConfig::NoisySurrogate { sigma, .. } if !(*sigma >= 0.0) => {
                push("evaluator.sigma", "must be non-negative".into());
            }
            _ => {}
        }
        if !(self.distrib.task_timeout_secs > 0.0) {
            push("distrib.task_timeout_secs", "must be positive".into());
        }
        if self.train.epochs == 0 {
            push("train.epochs", "must be at least 1".into());
        }
        if self.checkpoint_every == 0 {
            push("checkpoint_every", "must be at least 1".into());
        }
        issues
    }

    /// Fields a checkpoint cannot be resumed under if they change.
    pub fn resume_incompatibilities(&self, other: &RunConfig) -> Vec<String> {
        let mut out = Vec::new();
        let (a, b) = (&self.evolution, &other.evolution);
        let checks: [(&str, bool); 7] = [
            (
                "evolution.module_population_size",
                a.module_population_size == b.module_population_size,
            ),
            (
                "evolution.blueprint_population_size",
                a.blueprint_population_size == b.blueprint_population_size,
            ),
            (
                "evolution.assembled_population_size",
                a.assembled_population_size == b.assembled_population_size,
            ),
            ("evolution.seed", a.seed == b.seed),
            ("evolution.hyperparameter_only", a.hyperparameter_only == b.hyperparameter_only),
            ("search_space", self.search_space == other.search_space),
            ("objectives", self.objectives == other.objectives),
        ];
        for (field, same) in checks {
            if !same {
                out.push(field.to_string());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_carry_appendix_values() {
        let w = RunConfig::wikidetox();
        assert_eq!(w.evolution.module_population_size, 56);
        assert_eq!(w.evolution.blueprint_population_size, 22);
        assert_eq!(w.evolution.assembled_population_size, 100);
        assert_eq!(w.evolution.module_add_node_prob, 0.05);
        assert_eq!(w.evolution.module_species_target, 4);
        assert_eq!(w.evolution.blueprint_species_target, 1);
        assert_eq!(w.search_space.min_pooling_layers, 5);
        assert!(!w.search_space.weight_sharing);
        let c = RunConfig::chest_xray();
        assert_eq!(c.evolution.blueprint_add_node_prob, 0.16);
        assert_eq!(c.evolution.blueprint_add_connection_prob, 0.12);
        assert_eq!(c.search_space.kernel_sizes, vec![1, 3]);
        assert_eq!(c.search_space.dropout_rate, [0.0, 0.7]);
        assert!(c.search_space.weight_sharing);
        assert!(w.validate().is_empty(), "{:?}", w.validate());
        assert!(c.validate().is_empty(), "{:?}", c.validate());
    }

    #[test]
    fn validation_names_bad_fields() {
        let mut cfg = RunConfig::wikidetox();
        cfg.evolution.module_add_node_prob = 1.5;
        cfg.evolution.module_population_size = 2;
        let issues = cfg.validate();
        let fields: Vec<_> = issues.iter().map(|i| i.field.as_str()).collect();
        assert!(fields.contains(&"evolution.module_add_node_prob"));
        assert!(fields.contains(&"evolution.module_population_size"));
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"evolution": {"generations": 5}}"#).unwrap();
        assert_eq!(cfg.evolution.generations, 5);
        assert_eq!(cfg.evolution.module_population_size, 56);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let r: Result<RunConfig, _> = serde_json::from_str(r#"{"evolutoin": {}}"#);
        assert!(r.is_err());
    }
}
