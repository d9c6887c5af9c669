#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use coevo::core::config::{EvaluatorConfig, TrainConfig};
use coevo::core::evaluation::{EvaluationResult, EvaluationStatus, EvaluationTask};
use coevo::core::multiobjective::ObjectiveVector;
use coevo::distrib::{ManualClock, QueueConfig, TaskQueue};

pub fn task(id: &str) -> EvaluationTask {
    EvaluationTask {
        task_id: id.into(),
        network_json: "{}".into(),
        train_config: TrainConfig::default(),
        submitted_at: 0.0,
    }
}

pub fn ok_result(id: &str, worker: &str, primary: f64) -> EvaluationResult {
    EvaluationResult {
        task_id: id.into(),
        primary,
        raw_secondary: 1.0,
        status: EvaluationStatus::Ok,
        worker_id: worker.into(),
        duration: 1.0,
        reason: None,
    }
}

/// Brute-force first front: distinct (primary, secondary) pairs that no
/// other distinct pair weakly dominates.
pub fn brute_front(points: &[ObjectiveVector]) -> BTreeSet<(u64, u64)> {
    let distinct: BTreeSet<(u64, u64)> = points.iter().map(key).collect();
    let vals: Vec<(f64, f64)> = distinct.iter().map(|&(a, b)| (f64::from_bits(a), f64::from_bits(b))).collect();
    distinct
        .iter()
        .zip(&vals)
        .filter(|(_, q)| !vals.iter().any(|r| r != *q && r.0 >= q.0 && r.1 >= q.1))
        .map(|(k, _)| *k)
        .collect()
}

pub fn key(p: &ObjectiveVector) -> (u64, u64) {
    (p.primary.to_bits(), p.secondary.to_bits())
}

pub fn point(primary: f64, secondary: f64) -> ObjectiveVector {
    ObjectiveVector {
        primary,
        secondary,
        raw_secondary: -secondary,
    }
}

/// Random objective set of 0..=64 points drawn from one of several shapes:
/// a coarse grid (many ties and duplicates), the continuum, or a noisy
/// trade-off curve (large fronts).
pub fn random_points(rng: &mut ChaCha8Rng) -> Vec<ObjectiveVector> {
    let n = rng.random_range(0..=64);
    let shape = rng.random_range(0..3);
    (0..n)
        .map(|_| match shape {
            0 => point(rng.random_range(0..6) as f64, rng.random_range(0..6) as f64),
            1 => point(rng.random::<f64>(), -rng.random_range(1.0..1e6)),
            _ => {
                let t: f64 = rng.random();
                point(t + 0.05 * rng.random::<f64>(), 1.0 - t + 0.05 * rng.random::<f64>())
            }
        })
        .collect()
}

pub fn surrogate_sigma(config: &EvaluatorConfig) -> f64 {
    match config {
        EvaluatorConfig::NoisySurrogate { sigma, .. } => *sigma,
        _ => 0.0,
    }
}

/// Fault-injection scenario for the task queue.
#[derive(Debug, Clone, Copy)]
pub struct SimParams {
    pub tasks: usize,
    pub workers: usize,
    pub crash_prob: f64,
    pub seed: u64,
}

impl SimParams {
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5151);
        Self {
            tasks: rng.random_range(1..=500),
            workers: rng.random_range(1..=16),
            crash_prob: rng.random_range(0.0..=0.3),
            seed,
        }
    }
}

#[derive(Debug, Default)]
pub struct SimReport {
    pub violations: Vec<String>,
    pub delivered: usize,
    pub failed: usize,
    pub crashes: usize,
    pub late_returns: usize,
    pub duplicate_returns: usize,
    pub ticks: u64,
}

enum WorkerState {
    Idle,
    Busy {
        task: String,
        done_at: u64,
        crash: bool,
        echo: bool,
    },
    Down {
        until: u64,
    },
}

/// Single-threaded discrete-time simulation on a manual clock. Workers pull,
/// take a random time (sometimes longer than the timeout), and then either
/// crash silently, return once, or return twice. Tasks arrive in waves while
/// workers are busy. After every tick the queue's three task sets must
/// partition everything submitted; at the end every task must have been
/// delivered exactly once.
pub fn simulate(p: SimParams) -> SimReport {
    const TIMEOUT: u64 = 20;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let clock = Arc::new(ManualClock::new(0.0));
    let queue = TaskQueue::with_clock(
        QueueConfig {
            task_timeout: TIMEOUT as f64,
            max_retries: 3,
        },
        Box::new(clock.clone()),
    );
    let mut report = SimReport::default();
    let mut workers: Vec<WorkerState> = (0..p.workers).map(|_| WorkerState::Idle).collect();
    let mut submitted: BTreeSet<String> = BTreeSet::new();
    let mut delivered: BTreeMap<String, usize> = BTreeMap::new();
    let waves = rng.random_range(1..=4usize);
    let per_wave = p.tasks.div_ceil(waves);
    let mut next_task = 0usize;
    let limit = 200_000u64;

    for tick in 0..limit {
        report.ticks = tick;
        clock.set(tick as f64);
        if next_task < p.tasks && (tick == 0 || rng.random_bool(0.05)) {
            for _ in 0..per_wave.min(p.tasks - next_task) {
                let id = format!("t{next_task}");
                if queue.submit(task(&id)).is_err() {
                    report.violations.push(format!("fresh id {id} rejected"));
                }
                submitted.insert(id);
                next_task += 1;
            }
        }

        let mut order: Vec<usize> = (0..workers.len()).collect();
        order.shuffle(&mut rng);
        for w in order {
            let name = format!("w{w}");
            match &workers[w] {
                WorkerState::Idle => {
                    if let Some(t) = queue.worker_pull(&name) {
                        let slow = rng.random_bool(0.1);
                        let took = if slow {
                            rng.random_range(TIMEOUT..3 * TIMEOUT)
                        } else {
                            rng.random_range(1..TIMEOUT)
                        };
                        workers[w] = WorkerState::Busy {
                            task: t.task_id,
                            done_at: tick + took,
                            crash: rng.random_bool(p.crash_prob),
                            echo: rng.random_bool(0.1),
                        };
                    }
                }
                WorkerState::Busy {
                    task,
                    done_at,
                    crash,
                    echo,
                } if *done_at <= tick => {
                    if *crash {
                        report.crashes += 1;
                        workers[w] = WorkerState::Down {
                            until: tick + rng.random_range(1..50),
                        };
                        continue;
                    }
                    let r = ok_result(task, &name, 1.0);
                    use coevo::distrib::ReturnOutcome::*;
                    match queue.worker_return(r.clone()) {
                        Accepted => {}
                        Duplicate => report.late_returns += 1,
                        Unknown => report.violations.push(format!("submitted task {task} reported unknown")),
                    }
                    if *echo {
                        report.duplicate_returns += 1;
                        if queue.worker_return(r) != Duplicate {
                            report.violations.push(format!("second return of {task} accepted"));
                        }
                    }
                    workers[w] = WorkerState::Idle;
                }
                WorkerState::Down { until } if *until <= tick => workers[w] = WorkerState::Idle,
                _ => {}
            }
        }

        queue.reap_timeouts(tick as f64);
        while let Some(r) = queue.try_next_result() {
            if r.status == EvaluationStatus::Failed {
                report.failed += 1;
            }
            *delivered.entry(r.task_id).or_default() += 1;
        }

        let snap = queue.snapshot();
        let parts = [&snap.pending, &snap.in_flight, &snap.done];
        let total: usize = parts.iter().map(|s| s.len()).sum();
        let union: BTreeSet<&String> = parts.iter().flat_map(|s| s.iter()).collect();
        if total != union.len() {
            report.violations.push(format!("tick {tick}: task sets overlap"));
        }
        if union.len() != submitted.len() || !union.iter().all(|id| submitted.contains(*id)) {
            report
                .violations
                .push(format!("tick {tick}: task sets do not cover the submissions"));
        }
        if !report.violations.is_empty() {
            break;
        }
        if next_task == p.tasks && delivered.len() == p.tasks && queue.in_flight_len() == 0 && queue.pending_len() == 0 {
            break;
        }
    }

    for id in &submitted {
        match delivered.get(id).copied().unwrap_or(0) {
            1 => {}
            0 => report.violations.push(format!("{id} never delivered")),
            k => report.violations.push(format!("{id} delivered {k} times")),
        }
    }
    for id in delivered.keys().filter(|id| !submitted.contains(*id)) {
        report.violations.push(format!("{id} delivered but never submitted"));
    }
    report.delivered = delivered.values().sum();
    report
}
