//! In-process parallel evaluation.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use coevo_core::evaluation::{BatchEvaluator, Capabilities, EvaluationResult, EvaluationTask, Evaluator};

pub const LOCAL_WORKER: &str = "local";

fn evaluate_one(evaluator: &dyn Evaluator, task: &EvaluationTask) -> EvaluationResult {
    match catch_unwind(AssertUnwindSafe(|| evaluator.evaluate(task))) {
        Ok(mut r) => {
            r.task_id.clone_from(&task.task_id);
            r
        }
        Err(panic) => {
            let why = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "evaluator panicked".into());
            EvaluationResult::failed(&task.task_id, LOCAL_WORKER, why)
        }
    }
}

/// Evaluates every task on `parallelism` threads. Results are in task
/// order; a panicking evaluation becomes a failed result for that task only.
pub fn evaluate_local(tasks: &[EvaluationTask], evaluator: &dyn Evaluator, parallelism: usize) -> Vec<EvaluationResult> {
    let threads = parallelism.max(1).min(tasks.len().max(1));
    if threads == 1 {
        return tasks.iter().map(|t| evaluate_one(evaluator, t)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<EvaluationResult>>> = Mutex::new(vec![None; tasks.len()]);
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(task) = tasks.get(i) else { break };
                let r = evaluate_one(evaluator, task);
                slots.lock().unwrap_or_else(|p| p.into_inner())[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .unwrap_or_else(|p| p.into_inner())
        .into_iter()
        .zip(tasks)
        .map(|(r, t)| r.unwrap_or_else(|| EvaluationResult::failed(&t.task_id, LOCAL_WORKER, "lost")))
        .collect()
}

/// [`BatchEvaluator`] backed by [`evaluate_local`].
pub struct LocalPool {
    pub evaluator: Arc<dyn Evaluator>,
    pub parallelism: usize,
}

impl LocalPool {
    pub fn new(evaluator: Arc<dyn Evaluator>, parallelism: usize) -> Self {
        Self { evaluator, parallelism }
    }
}

impl BatchEvaluator for LocalPool {
    fn evaluate_batch(&mut self, tasks: &[EvaluationTask]) -> Vec<EvaluationResult> {
        evaluate_local(tasks, self.evaluator.as_ref(), self.parallelism)
    }

    fn capabilities(&self) -> Capabilities {
        self.evaluator.capabilities()
    }
}
