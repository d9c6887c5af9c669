//! Graph chromosomes for modules and blueprints.
//!
//! A module chromosome is a small DAG whose nodes each carry a layer
//! hyperparameter table. A blueprint chromosome is a DAG whose nodes each
//! point at a module species, plus a table of network-wide globals. Edges
//! carry no weights; they only say how nodes connect. Every gene has an
//! innovation number from the [`InnovationRegistry`] so that crossover can
//! align genes across parents.

mod chromosome;
mod distance;
mod innovation;
mod operators;
pub mod params;

pub use chromosome::{ChromosomeGraph, ChromosomeKind, EdgeGene, GenomeContext, NodeGene, NodePayload, StructureKey};
pub use distance::{compatibility_distance, CompatibilityCoefficients};
pub use innovation::{InnovationRegistry, MutationSignature};
pub use operators::{crossover, CrossoverOptions, MutationOutcome};
pub use params::{HyperparameterSpec, HyperparameterTable, ParamKind, ParamValue, SearchSpace};
