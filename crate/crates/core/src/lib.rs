//! Cooperative coevolution of network blueprints and modules.
//!
//! Two NEAT-style populations evolve side by side. Module chromosomes are
//! small layer graphs; blueprint chromosomes are graphs whose nodes point at
//! module species. Every generation blueprints are assembled into full
//! networks by splicing one module per referenced species into each node,
//! the networks are evaluated, and their fitness is attributed back to the
//! chromosomes that built them.
//!
//! The crate is `no_std` (it needs `alloc`). Anything touching files,
//! sockets, threads or clocks lives in the `coevo` companion crate.
//!
//! Layout:
//!
//! - [`genome`]: hyperparameter search spaces, graph chromosomes, innovation
//!   registry, mutation, crossover and compatibility distance.
//! - [`speciation`]: species bookkeeping, offspring allocation, reproduction.
//! - [`multiobjective`]: Pareto-front construction and front-peeling ranks.
//! - [`network`]: the assembled-network IR, shape inference, parameter
//!   counting and the interchange JSON encoding.
//! - [`assembly`]: blueprint + module splicing into a [`network::NetworkGraph`].
//! - [`evaluation`]: evaluator contract plus closed-form surrogate evaluators.
//! - [`coevolution`]: the generation loop and fitness attribution.
//! - [`config`]: run configuration schema and domain presets.
//! - [`baseline`]: random-search baseline over the initial distribution.

#![no_std]
// `!(x >= 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod assembly;
pub mod baseline;
pub mod coevolution;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod genome;
pub mod multiobjective;
pub mod network;
pub mod speciation;

/// Random number generator used throughout the engine. Its full state is
/// serializable so checkpoints resume bit-exactly.
pub type EngineRng = rand_chacha::ChaCha8Rng;

pub use error::{Error, Result};
