//! Experiment runs on disk: run, resume, report.
//!
//! A run directory holds
//!
//! - `effective_config.json`: the config after defaults and overrides;
//! - `generations.jsonl`: one [`GenerationReport`] per line;
//! - `pareto_gen_<g>.csv`: every network of generation `g` with its front;
//! - `checkpoint_<n>.json`: full engine state after `n` generations;
//! - `best_network.json`: interchange JSON of the best network so far;
//! - `pareto_history.csv`: written by `report`.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use coevo_core::coevolution::{CoevolutionState, GenerationOutcome, GenerationReport};
use coevo_core::config::{EvaluatorConfig, RunConfig};
use coevo_core::evaluation::{evaluator_from_config, BatchEvaluator, Capabilities, EvaluationResult, EvaluationTask};
use coevo_core::network::serialize_network;

use crate::distrib::{QueueConfig, RemoteEvaluator, Server, ServerOptions, TaskQueue};
use crate::local::LocalPool;

pub const EFFECTIVE_CONFIG: &str = "effective_config.json";
pub const GENERATION_LOG: &str = "generations.jsonl";
pub const BEST_NETWORK: &str = "best_network.json";
pub const PARETO_HISTORY: &str = "pareto_history.csv";
const CHECKPOINT_FORMAT: &str = "coevo-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

pub fn pareto_path(dir: &Path, generation: u32) -> PathBuf {
    dir.join(format!("pareto_gen_{generation}.csv"))
}

pub fn checkpoint_path(dir: &Path, completed: u32) -> PathBuf {
    dir.join(format!("checkpoint_{completed}.json"))
}

/// Writes through a temporary file and a rename, so readers never see a
/// half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    state: CoevolutionState,
}

pub fn write_checkpoint(dir: &Path, state: &CoevolutionState) -> Result<PathBuf> {
    let ck = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        state: state.clone(),
    };
    let path = checkpoint_path(dir, state.generation);
    write_atomic(&path, &serde_json::to_vec(&ck)?)?;
    Ok(path)
}

pub fn read_checkpoint(path: &Path) -> Result<CoevolutionState> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let head: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("{} is not valid JSON", path.display()))?;
    if head.get("format").and_then(|v| v.as_str()) != Some(CHECKPOINT_FORMAT) {
        bail!("{} is not a checkpoint", path.display());
    }
    let version = head.get("version").and_then(|v| v.as_u64());
    if version != Some(u64::from(CHECKPOINT_VERSION)) {
        bail!("{}: unsupported checkpoint version {version:?}", path.display());
    }
    let state = head.get("state").context("checkpoint has no state")?;
    // round-trip through the core loader so chromosomes get validated
    CoevolutionState::from_checkpoint_json(&state.to_string()).map_err(|e| anyhow::anyhow!("{}: corrupt checkpoint: {e}", path.display()))
}

/// The checkpoint with the most completed generations, if any.
pub fn latest_checkpoint(dir: &Path) -> Result<Option<(u32, PathBuf)>> {
    let mut best: Option<(u32, PathBuf)> = None;
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(n) = name.strip_prefix("checkpoint_").and_then(|s| s.strip_suffix(".json")) else {
            continue;
        };
        let Ok(n) = n.parse::<u32>() else { continue };
        if best.as_ref().is_none_or(|(b, _)| n > *b) {
            best = Some((n, path));
        }
    }
    Ok(best)
}

/// One row of a Pareto CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoRow {
    pub generation: u32,
    pub network_id: String,
    pub primary: f64,
    pub raw_secondary: f64,
    pub front_index: usize,
}

pub fn write_pareto_csv(path: &Path, rows: &[ParetoRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["generation", "network_id", "primary", "raw_secondary", "front_index"])?;
    }
    write_atomic(path, &w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)
}

pub fn read_pareto_csv(path: &Path) -> Result<Vec<ParetoRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

pub fn read_generation_log(dir: &Path) -> Result<Vec<GenerationReport>> {
    let path = dir.join(GENERATION_LOG);
    let f = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    BufReader::new(f)
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|(i, l)| {
            let l = l?;
            serde_json::from_str(&l).with_context(|| format!("{}:{}", path.display(), i + 1))
        })
        .collect()
}

/// Keeps only the log lines of generations before `completed`.
fn truncate_log(dir: &Path, completed: u32) -> Result<()> {
    let path = dir.join(GENERATION_LOG);
    if !path.exists() {
        return Ok(());
    }
    let text = fs::read_to_string(&path)?;
    let mut kept = String::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let rep: GenerationReport = serde_json::from_str(line).context("corrupt generation log")?;
        if rep.generation < completed {
            kept.push_str(line);
            kept.push('\n');
        }
    }
    write_atomic(&path, kept.as_bytes())
}

/// Where evaluations happen for a run.
pub enum Backend {
    Local(LocalPool),
    Remote { server: Server, evaluator: RemoteEvaluator },
}

impl Backend {
    /// Local thread pool for surrogate evaluators; a listening completion
    /// service for `remote`.
    pub fn from_config(config: &RunConfig, jobs: usize) -> Result<Self> {
        if let Some(e) = evaluator_from_config(&config.evaluator) {
            return Ok(Backend::Local(LocalPool::new(Arc::from(e), jobs)));
        }
        let d = &config.distrib;
        let queue = Arc::new(TaskQueue::new(QueueConfig {
            task_timeout: d.task_timeout_secs,
            max_retries: d.max_retries,
        }));
        let server = Server::start(
            (d.host.as_str(), d.port),
            queue.clone(),
            ServerOptions {
                idle_timeout: Duration::from_secs_f64(d.idle_timeout_secs),
                reap_interval: Duration::from_secs(1),
            },
        )
        .with_context(|| format!("binding {}:{}", d.host, d.port))?;
        let evaluator = RemoteEvaluator::new(queue, Duration::from_secs_f64(d.generation_timeout_secs));
        Ok(Backend::Remote { server, evaluator })
    }
}

impl BatchEvaluator for Backend {
    fn evaluate_batch(&mut self, tasks: &[EvaluationTask]) -> Vec<EvaluationResult> {
        match self {
            Backend::Local(p) => p.evaluate_batch(tasks),
            Backend::Remote { evaluator, .. } => evaluator.evaluate_batch(tasks),
        }
    }

    fn capabilities(&self) -> Capabilities {
        match self {
            Backend::Local(p) => p.capabilities(),
            Backend::Remote { evaluator, .. } => evaluator.capabilities(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Stop (with a checkpoint) once this many generations are complete.
    pub stop_after: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub generations_completed: u32,
    pub best_fitness: Option<f64>,
    pub best_network_id: Option<String>,
    /// The configured generation count was reached.
    pub finished: bool,
}

/// Starts a fresh run in `dir`. Refuses a directory that already holds a
/// generation log.
pub fn run(config: RunConfig, dir: &Path, evaluator: &mut dyn BatchEvaluator, options: &RunOptions) -> Result<RunSummary> {
    let issues = config.validate();
    if !issues.is_empty() {
        let list: Vec<String> = issues.iter().map(|i| i.to_string()).collect();
        bail!("invalid config:\n  {}", list.join("\n  "));
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let log = dir.join(GENERATION_LOG);
    if log.metadata().is_ok_and(|m| m.len() > 0) {
        bail!("{} already holds a run; use `resume`", dir.display());
    }
    write_atomic(&dir.join(EFFECTIVE_CONFIG), &serde_json::to_vec_pretty(&config)?)?;
    File::create(&log)?;
    let state = CoevolutionState::new(config).map_err(|e| anyhow::anyhow!("{e}"))?;
    drive(state, dir, evaluator, options)
}

/// Continues the run in `dir` from its latest checkpoint. With `config`,
/// the run continues under that config if it is compatible.
pub fn resume(dir: &Path, config: Option<RunConfig>, evaluator: &mut dyn BatchEvaluator, options: &RunOptions) -> Result<RunSummary> {
    let (completed, path) = latest_checkpoint(dir)?.with_context(|| format!("no checkpoint in {}", dir.display()))?;
    let mut state = read_checkpoint(&path)?;
    if state.generation != completed {
        bail!("{} holds generation {}, not {completed}", path.display(), state.generation);
    }
    if let Some(new) = config {
        let diff = state.config.resume_incompatibilities(&new);
        if !diff.is_empty() {
            bail!("config cannot resume this run; changed: {}", diff.join(", "));
        }
        let issues = new.validate();
        if !issues.is_empty() {
            let list: Vec<String> = issues.iter().map(|i| i.to_string()).collect();
            bail!("invalid config:\n  {}", list.join("\n  "));
        }
        state.config = new;
        write_atomic(&dir.join(EFFECTIVE_CONFIG), &serde_json::to_vec_pretty(&state.config)?)?;
    }
    truncate_log(dir, completed)?;
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let stale = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("pareto_gen_")?.strip_suffix(".csv")?.parse::<u32>().ok())
            .is_some_and(|g| g >= completed);
        if stale {
            fs::remove_file(&path)?;
        }
    }
    log::info!("resuming {} after generation {completed}", dir.display());
    drive(state, dir, evaluator, options)
}

fn drive(mut state: CoevolutionState, dir: &Path, evaluator: &mut dyn BatchEvaluator, options: &RunOptions) -> Result<RunSummary> {
    let remote = evaluator.capabilities().remote;
    let every = state.config.checkpoint_every.max(1);
    if state.generation == 0 {
        write_checkpoint(dir, &state)?;
    }
    while !state.is_finished() && options.stop_after.is_none_or(|s| state.generation < s) {
        let outcome = state.evolve_generation(evaluator).map_err(|e| anyhow::anyhow!("{e}"))?;
        if remote && !outcome.networks.is_empty() && outcome.report.evaluation_failures == outcome.networks.len() {
            bail!(
                "no worker returned a result for generation {}; last checkpoint kept",
                outcome.report.generation
            );
        }
        record_generation(dir, &state, &outcome)?;
        if state.generation.is_multiple_of(every) || state.is_finished() {
            write_checkpoint(dir, &state)?;
        }
    }
    if !state.generation.is_multiple_of(every) {
        write_checkpoint(dir, &state)?;
    }
    Ok(RunSummary {
        generations_completed: state.generation,
        best_fitness: state.elite.as_ref().map(|e| e.objectives.primary),
        best_network_id: state.elite.as_ref().map(|e| e.network_id.clone()),
        finished: state.is_finished(),
    })
}

fn record_generation(dir: &Path, state: &CoevolutionState, outcome: &GenerationOutcome) -> Result<()> {
    let rep = &outcome.report;
    let rows: Vec<ParetoRow> = outcome
        .networks
        .iter()
        .map(|n| ParetoRow {
            generation: rep.generation,
            network_id: n.network_id.clone(),
            primary: n.primary,
            raw_secondary: n.raw_secondary,
            front_index: n.front_index,
        })
        .collect();
    write_pareto_csv(&pareto_path(dir, rep.generation), &rows)?;
    if let Some(elite) = &state.elite {
        let bytes = serialize_network(&elite.network.network).map_err(|e| anyhow::anyhow!("{e}"))?;
        write_atomic(&dir.join(BEST_NETWORK), &bytes)?;
    }
    let mut line = serde_json::to_string(rep)?;
    line.push('\n');
    let mut log = OpenOptions::new().append(true).create(true).open(dir.join(GENERATION_LOG))?;
    log.write_all(line.as_bytes())?;
    log.sync_data()?;
    log::info!(
        "generation {}: best {:.4} mean {:.4} smallest {} params, {} failures",
        rep.generation,
        rep.best_fitness,
        rep.mean_fitness,
        rep.best_secondary,
        rep.evaluation_failures
    );
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportLine {
    pub generation: u32,
    pub best_fitness: f64,
    pub best_so_far: f64,
    pub mean_fitness: f64,
    pub cumulative_time: f64,
}

/// Summarises a run directory and writes the merged Pareto history.
pub fn report(dir: &Path) -> Result<Vec<ReportLine>> {
    let reports = read_generation_log(dir)?;
    if reports.is_empty() {
        bail!("{} has no completed generations", dir.display());
    }
    let mut lines = Vec::with_capacity(reports.len());
    let (mut best, mut time) = (f64::NEG_INFINITY, 0.0);
    let mut history = Vec::new();
    for r in &reports {
        best = best.max(r.best_fitness);
        time += r.wall_time;
        lines.push(ReportLine {
            generation: r.generation,
            best_fitness: r.best_fitness,
            best_so_far: best,
            mean_fitness: r.mean_fitness,
            cumulative_time: time,
        });
        let p = pareto_path(dir, r.generation);
        if p.exists() {
            history.extend(read_pareto_csv(&p)?);
        }
    }
    write_pareto_csv(&dir.join(PARETO_HISTORY), &history)?;
    Ok(lines)
}

/// Whether a config asks for remote evaluation.
pub fn is_remote(config: &RunConfig) -> bool {
    matches!(config.evaluator, EvaluatorConfig::Remote)
}
