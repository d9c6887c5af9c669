//! Batch evaluation through the completion service.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use coevo_core::evaluation::{BatchEvaluator, Capabilities, EvaluationResult, EvaluationTask};

use super::queue::TaskQueue;

/// Submits a whole generation, then collects results as they arrive.
/// Tasks without a result when `generation_timeout` runs out are cancelled
/// and reported as failed.
pub struct RemoteEvaluator {
    queue: Arc<TaskQueue>,
    pub generation_timeout: Duration,
    /// Upper bound on one wait for a result; expired tasks are reaped on
    /// every wake-up.
    pub poll: Duration,
}

pub const SERVER_WORKER: &str = "server";

impl RemoteEvaluator {
    pub fn new(queue: Arc<TaskQueue>, generation_timeout: Duration) -> Self {
        Self {
            queue,
            generation_timeout,
            poll: Duration::from_millis(100),
        }
    }

    pub fn queue(&self) -> &Arc<TaskQueue> {
        &self.queue
    }
}

impl BatchEvaluator for RemoteEvaluator {
    fn evaluate_batch(&mut self, tasks: &[EvaluationTask]) -> Vec<EvaluationResult> {
        let mut out = Vec::with_capacity(tasks.len());
        let mut waiting = BTreeSet::new();
        for t in tasks {
            match self.queue.submit(t.clone()) {
                Ok(()) => {
                    waiting.insert(t.task_id.clone());
                }
                Err(e) => out.push(EvaluationResult::failed(&t.task_id, SERVER_WORKER, e.to_string())),
            }
        }
        let until = Instant::now() + self.generation_timeout;
        while !waiting.is_empty() {
            let left = until.saturating_duration_since(Instant::now());
            if left.is_zero() {
                break;
            }
            self.queue.reap_timeouts(self.queue.now());
            if let Some(r) = self.queue.next_result(left.min(self.poll)) {
                if waiting.remove(&r.task_id) {
                    out.push(r);
                }
            }
        }
        if !waiting.is_empty() {
            log::warn!("{} tasks unfinished at the generation timeout", waiting.len());
        }
        for id in waiting {
            self.queue.cancel(&id);
            out.push(EvaluationResult::failed(&id, SERVER_WORKER, "generation timed out"));
        }
        out
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            deterministic: false,
            remote: true,
        }
    }
}
