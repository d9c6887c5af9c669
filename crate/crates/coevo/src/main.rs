use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use coevo::core::config::{EvaluatorConfig, RunConfig};
use coevo::core::evaluation::{evaluator_from_config, Evaluator, SurrogateConfig, SurrogateEvaluator};
use coevo::distrib::{TcpTransport, Worker};
use coevo::runner::{self, Backend, RunOptions};

#[derive(Parser)]
#[command(name = "coevo", version, about = "Coevolutionary neural architecture search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start a new run from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override evolution.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory (defaults to the config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Stop after this many generations, leaving a checkpoint.
        #[arg(long)]
        stop_after: Option<u32>,
        /// Local evaluation threads.
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
    },
    /// Continue a run from its latest checkpoint.
    Resume {
        /// Run directory, or a checkpoint file inside one.
        #[arg(long)]
        out: PathBuf,
        /// Continue under this (compatible) config instead of the stored one.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        stop_after: Option<u32>,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
    },
    /// Print best-so-far per generation and write pareto_history.csv.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve evaluations to a completion-service server with the built-in
    /// surrogate.
    Worker {
        /// Server address, host:port.
        #[arg(long)]
        connect: String,
        /// Config whose surrogate settings to use.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        id: Option<String>,
        /// Exit after this many tasks.
        #[arg(long)]
        max_tasks: Option<u64>,
        /// Exit on the first empty pull instead of polling.
        #[arg(long)]
        exit_when_idle: bool,
    },
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("COEVO_LOG", "info")).init();
    match Cli::parse().command {
        Command::Run {
            config,
            seed,
            out,
            stop_after,
            jobs,
        } => {
            let mut cfg = coevo::load_config(&config)?;
            if let Some(seed) = seed {
                cfg.evolution.seed = seed;
            }
            let dir = out.unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
            cfg.output_dir = dir.display().to_string();
            let mut backend = Backend::from_config(&cfg, jobs)?;
            let summary = runner::run(cfg, &dir, &mut backend, &RunOptions { stop_after })?;
            print_summary(&dir, &summary);
        }
        Command::Resume {
            out,
            config,
            stop_after,
            jobs,
        } => {
            let dir = run_dir(&out);
            let cfg = config.as_deref().map(coevo::load_config).transpose()?;
            let stored = match &cfg {
                Some(c) => c.clone(),
                None => coevo::load_config(&dir.join(runner::EFFECTIVE_CONFIG))?,
            };
            let mut backend = Backend::from_config(&stored, jobs)?;
            let summary = runner::resume(&dir, cfg, &mut backend, &RunOptions { stop_after })?;
            print_summary(&dir, &summary);
        }
        Command::Report { out } => {
            let dir = run_dir(&out);
            let lines = runner::report(&dir)?;
            println!("generation,best_fitness,best_so_far,mean_fitness,cumulative_time");
            for l in &lines {
                println!(
                    "{},{},{},{},{}",
                    l.generation, l.best_fitness, l.best_so_far, l.mean_fitness, l.cumulative_time
                );
            }
            eprintln!("wrote {}", dir.join(runner::PARETO_HISTORY).display());
        }
        Command::Worker {
            connect,
            config,
            id,
            max_tasks,
            exit_when_idle,
        } => {
            let evaluator = worker_evaluator(config.as_deref())?;
            let id = id.unwrap_or_else(|| format!("worker-{}", std::process::id()));
            let transport =
                TcpTransport::connect(connect.as_str(), Duration::from_secs(10)).with_context(|| format!("connecting to {connect}"))?;
            let mut worker = Worker::connect(transport, &id, evaluator)?;
            let done = worker.run_limited(max_tasks, exit_when_idle)?;
            log::info!("worker {id} finished {done} tasks");
        }
    }
    Ok(())
}

fn run_dir(path: &Path) -> PathBuf {
    if path.is_file() {
        path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
    } else {
        path.to_path_buf()
    }
}

fn worker_evaluator(config: Option<&Path>) -> Result<Arc<dyn Evaluator>> {
    let Some(path) = config else {
        return Ok(Arc::new(SurrogateEvaluator::new(SurrogateConfig::default())));
    };
    let cfg: RunConfig = coevo::load_config(path)?;
    if let Some(e) = evaluator_from_config(&cfg.evaluator) {
        return Ok(Arc::from(e));
    }
    match cfg.evaluator {
        EvaluatorConfig::Remote => Ok(Arc::new(SurrogateEvaluator::new(SurrogateConfig::for_space(&cfg.search_space)))),
        _ => bail!("unsupported evaluator"),
    }
}

fn print_summary(dir: &Path, s: &runner::RunSummary) {
    let state = if s.finished { "finished" } else { "stopped" };
    match (&s.best_network_id, s.best_fitness) {
        (Some(id), Some(f)) => println!(
            "{state} after {} generations; best {id} fitness {f:.6}; outputs in {}",
            s.generations_completed,
            dir.display()
        ),
        _ => println!(
            "{state} after {} generations; outputs in {}",
            s.generations_completed,
            dir.display()
        ),
    }
}
