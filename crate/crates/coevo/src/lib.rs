//! Standard-library side of the engine: local and distributed evaluation,
//! the worker protocol, run directories and the command line.
//!
//! The search itself lives in `coevo_core`, which is re-exported as
//! [`core`].

pub use coevo_core as core;

pub mod distrib;
pub mod local;
pub mod runner;

/// Reads and parses a JSON run config.
pub fn load_config(path: &std::path::Path) -> anyhow::Result<coevo_core::config::RunConfig> {
    use anyhow::Context;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
