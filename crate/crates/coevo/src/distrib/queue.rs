//! The completion service: submit many, workers pull one at a time,
//! results come back in completion order.
//!
//! Execution is at-least-once (an expired task is handed out again) but
//! delivery is exactly-once: the first result for a task id wins and every
//! later one is dropped.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use coevo_core::evaluation::{EvaluationResult, EvaluationTask};

/// Seconds on some monotonic timeline.
pub trait Clock: Send + Sync {
    fn now(&self) -> f64;
}

/// Wall time since construction.
#[derive(Debug, Clone)]
pub struct SystemClock(Instant);

impl SystemClock {
    pub fn new() -> Self {
        Self(Instant::now())
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// A clock that only moves when told to; for scripted timelines.
#[derive(Debug, Default)]
pub struct ManualClock(Mutex<f64>);

impl ManualClock {
    pub fn new(start: f64) -> Self {
        Self(Mutex::new(start))
    }

    pub fn advance(&self, secs: f64) {
        *self.0.lock().unwrap() += secs;
    }

    pub fn set(&self, t: f64) {
        *self.0.lock().unwrap() = t;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> f64 {
        *self.0.lock().unwrap()
    }
}

impl<C: Clock + ?Sized> Clock for Arc<C> {
    fn now(&self) -> f64 {
        (**self).now()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueConfig {
    /// Seconds a pulled task may stay out before it is handed out again.
    pub task_timeout: f64,
    pub max_retries: u32,
}

impl Default for QueueConfig {
    fn default() -> Self {
        Self {
            task_timeout: 600.0,
            max_retries: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SubmitError {
    #[error("task id `{0}` was already submitted")]
    Duplicate(String),
}

/// What happened to a returned result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReturnOutcome {
    Accepted,
    /// The task already has a result; this one was dropped.
    Duplicate,
    /// Never submitted, or cancelled.
    Unknown,
}

#[derive(Debug, Clone)]
struct InFlight {
    task: EvaluationTask,
    worker_id: String,
    deadline: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WorkerInfo {
    pub worker_id: String,
    pub last_seen: f64,
    pub tasks_completed: u64,
}

#[derive(Debug, Default)]
struct State {
    pending: VecDeque<EvaluationTask>,
    in_flight: HashMap<String, InFlight>,
    /// Results not yet taken by the consumer.
    done: VecDeque<EvaluationResult>,
    /// Ids whose result was delivered, or that were cancelled.
    finished: HashSet<String>,
    attempts: HashMap<String, u32>,
    workers: BTreeMap<String, WorkerInfo>,
}

impl State {
    fn is_done(&self, id: &str) -> bool {
        self.finished.contains(id) || self.done.iter().any(|r| r.task_id == id)
    }

    fn touch(&mut self, worker_id: &str, now: f64) -> &mut WorkerInfo {
        let w = self.workers.entry(worker_id.to_string()).or_insert_with(|| WorkerInfo {
            worker_id: worker_id.to_string(),
            ..WorkerInfo::default()
        });
        w.last_seen = now;
        w
    }
}

/// Task ids by location; the three sets partition everything submitted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueueSnapshot {
    pub pending: BTreeSet<String>,
    pub in_flight: BTreeSet<String>,
    /// Results waiting, delivered, or cancelled.
    pub done: BTreeSet<String>,
}

/// Thread-safe task queue. Every operation holds one lock for its whole
/// duration, so operations are atomic with respect to each other.
pub struct TaskQueue {
    state: Mutex<State>,
    results: Condvar,
    clock: Box<dyn Clock>,
    config: QueueConfig,
}

impl TaskQueue {
    pub fn new(config: QueueConfig) -> Self {
        Self::with_clock(config, Box::new(SystemClock::new()))
    }

    pub fn with_clock(config: QueueConfig, clock: Box<dyn Clock>) -> Self {
        Self {
            state: Mutex::new(State::default()),
            results: Condvar::new(),
            clock,
            config,
        }
    }

    pub fn config(&self) -> QueueConfig {
        self.config
    }

    pub fn now(&self) -> f64 {
        self.clock.now()
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        // a panicking holder never leaves the state half-updated
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Appends to the pending queue; never blocks.
    pub fn submit(&self, mut task: EvaluationTask) -> Result<(), SubmitError> {
        let mut st = self.lock();
        if st.attempts.contains_key(&task.task_id) || st.finished.contains(&task.task_id) {
            return Err(SubmitError::Duplicate(task.task_id));
        }
        task.submitted_at = self.clock.now();
        st.attempts.insert(task.task_id.clone(), 0);
        st.pending.push_back(task);
        Ok(())
    }

    /// Hands the head of the queue to `worker_id`, or `None` when nothing
    /// is pending.
    pub fn worker_pull(&self, worker_id: &str) -> Option<EvaluationTask> {
        let now = self.clock.now();
        let mut st = self.lock();
        st.touch(worker_id, now);
        let task = st.pending.pop_front()?;
        *st.attempts.entry(task.task_id.clone()).or_insert(0) += 1;
        st.in_flight.insert(
            task.task_id.clone(),
            InFlight {
                task: task.clone(),
                worker_id: worker_id.to_string(),
                deadline: now + self.config.task_timeout,
            },
        );
        Some(task)
    }

    /// Records a finished task. The first result for an id wins, even if
    /// the task had already expired and been queued again.
    pub fn worker_return(&self, result: EvaluationResult) -> ReturnOutcome {
        let now = self.clock.now();
        let mut st = self.lock();
        let id = result.task_id.clone();
        st.touch(&result.worker_id, now);
        if !st.attempts.contains_key(&id) {
            log::warn!("discarding result for unknown task {id}");
            return ReturnOutcome::Unknown;
        }
        if st.is_done(&id) {
            log::debug!("discarding duplicate result for {id} from {}", result.worker_id);
            return ReturnOutcome::Duplicate;
        }
        if st.in_flight.remove(&id).is_none() {
            // late return for a task that expired and went back to pending
            st.pending.retain(|t| t.task_id != id);
        }
        st.touch(&result.worker_id, now).tasks_completed += 1;
        st.done.push_back(result);
        drop(st);
        self.results.notify_all();
        ReturnOutcome::Accepted
    }

    /// Pops the oldest completed result without waiting.
    pub fn try_next_result(&self) -> Option<EvaluationResult> {
        let mut st = self.lock();
        let r = st.done.pop_front()?;
        st.finished.insert(r.task_id.clone());
        Some(r)
    }

    /// Pops the oldest completed result, waiting up to `timeout` for one.
    pub fn next_result(&self, timeout: Duration) -> Option<EvaluationResult> {
        let until = Instant::now() + timeout;
        let mut st = self.lock();
        loop {
            if let Some(r) = st.done.pop_front() {
                st.finished.insert(r.task_id.clone());
                return Some(r);
            }
            let left = until.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return None;
            }
            st = self.results.wait_timeout(st, left).unwrap_or_else(|p| p.into_inner()).0;
        }
    }

    /// Sends expired in-flight tasks back to the head of the queue, or
    /// fails them once their attempts are used up. Returns how many went
    /// back to pending.
    pub fn reap_timeouts(&self, now: f64) -> usize {
        let mut st = self.lock();
        let mut expired: Vec<String> = st
            .in_flight
            .iter()
            .filter(|(_, f)| f.deadline <= now)
            .map(|(id, _)| id.clone())
            .collect();
        if expired.is_empty() {
            return 0;
        }
        // reverse so the smallest id ends up at the very head
        expired.sort_unstable_by(|a, b| b.cmp(a));
        let mut requeued = 0;
        let mut failed = false;
        for id in expired {
            let f = st.in_flight.remove(&id).expect("expired id is in flight");
            let attempts = st.attempts.get(&id).copied().unwrap_or(0);
            if attempts < self.config.max_retries + 1 {
                log::info!("task {id} timed out on {}; requeued (attempt {attempts})", f.worker_id);
                st.pending.push_front(f.task);
                requeued += 1;
            } else {
                log::warn!("task {id} exhausted {attempts} attempts");
                let reason = format!("timed out after {attempts} attempts");
                st.done.push_back(EvaluationResult::failed(&id, &f.worker_id, reason));
                failed = true;
            }
        }
        drop(st);
        if failed {
            self.results.notify_all();
        }
        requeued
    }

    /// Withdraws a task wherever it is; any later result is dropped.
    /// Returns false if it was unknown or already finished.
    pub fn cancel(&self, task_id: &str) -> bool {
        let mut st = self.lock();
        if !st.attempts.contains_key(task_id) || st.finished.contains(task_id) {
            return false;
        }
        st.pending.retain(|t| t.task_id != task_id);
        st.in_flight.remove(task_id);
        st.done.retain(|r| r.task_id != task_id);
        st.finished.insert(task_id.to_string());
        true
    }

    pub fn attempts(&self, task_id: &str) -> u32 {
        self.lock().attempts.get(task_id).copied().unwrap_or(0)
    }

    pub fn pending_len(&self) -> usize {
        self.lock().pending.len()
    }

    pub fn in_flight_len(&self) -> usize {
        self.lock().in_flight.len()
    }

    pub fn workers(&self) -> Vec<WorkerInfo> {
        self.lock().workers.values().cloned().collect()
    }

    pub fn snapshot(&self) -> QueueSnapshot {
        let st = self.lock();
        QueueSnapshot {
            pending: st.pending.iter().map(|t| t.task_id.clone()).collect(),
            in_flight: st.in_flight.keys().cloned().collect(),
            done: st
                .done
                .iter()
                .map(|r| r.task_id.clone())
                .chain(st.finished.iter().cloned())
                .collect(),
        }
    }
}
