//! Pull-based worker: hello once, then pull / evaluate / return.

use std::io;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use coevo_core::evaluation::{EvaluationResult, Evaluator};

use super::protocol::{Message, PROTOCOL_VERSION};
use super::server::Transport;

pub struct Worker<T: Transport> {
    transport: T,
    worker_id: String,
    evaluator: Arc<dyn Evaluator>,
    /// Sleep between pulls while the queue is empty.
    pub poll_interval: Duration,
    completed: u64,
}

fn protocol_error(msg: Message) -> io::Error {
    let detail = match msg {
        Message::Error { message } => message,
        other => format!("unexpected {} reply", other.kind()),
    };
    io::Error::new(io::ErrorKind::InvalidData, detail)
}

impl<T: Transport> Worker<T> {
    /// Introduces the worker to the server.
    pub fn connect(mut transport: T, worker_id: &str, evaluator: Arc<dyn Evaluator>) -> io::Result<Self> {
        let hello = Message::Hello {
            proto: PROTOCOL_VERSION,
            worker_id: worker_id.to_string(),
        };
        match transport.exchange(&hello)? {
            Message::Ack => {}
            other => return Err(protocol_error(other)),
        }
        Ok(Self {
            transport,
            worker_id: worker_id.to_string(),
            evaluator,
            poll_interval: Duration::from_millis(50),
            completed: 0,
        })
    }

    pub fn worker_id(&self) -> &str {
        &self.worker_id
    }

    pub fn completed(&self) -> u64 {
        self.completed
    }

    /// Pulls and finishes at most one task. Returns whether there was one.
    pub fn step(&mut self) -> io::Result<bool> {
        let task = match self.transport.exchange(&Message::Pull)? {
            Message::Empty => return Ok(false),
            m @ Message::Task { .. } => m.into_task().expect("task message"),
            other => return Err(protocol_error(other)),
        };
        let evaluator = &self.evaluator;
        let mut result = catch_unwind(AssertUnwindSafe(|| evaluator.evaluate(&task)))
            .unwrap_or_else(|_| EvaluationResult::failed(&task.task_id, &self.worker_id, "evaluator panicked"));
        result.task_id = task.task_id;
        result.worker_id = self.worker_id.clone();
        match self.transport.exchange(&Message::result(&result))? {
            Message::Ack => {
                self.completed += 1;
                Ok(true)
            }
            other => Err(protocol_error(other)),
        }
    }

    /// Works until `stop` is set or the connection fails; returns the
    /// number of tasks completed.
    pub fn run(&mut self, stop: &AtomicBool) -> io::Result<u64> {
        while !stop.load(Ordering::Relaxed) {
            if !self.step()? {
                std::thread::sleep(self.poll_interval);
            }
        }
        Ok(self.completed)
    }

    /// Works until `max_tasks` are done (if given) or, with `exit_when_idle`,
    /// the first empty pull.
    pub fn run_limited(&mut self, max_tasks: Option<u64>, exit_when_idle: bool) -> io::Result<u64> {
        while max_tasks.is_none_or(|m| self.completed < m) {
            if !self.step()? {
                if exit_when_idle {
                    break;
                }
                std::thread::sleep(self.poll_interval);
            }
        }
        Ok(self.completed)
    }
}
