mod common;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use coevo::distrib::{QueueConfig, ReturnOutcome, TaskQueue};
use proptest::prelude::*;

use common::{simulate, SimParams};

#[test]
fn worst_case_simulation_has_no_violations() {
    let r = simulate(SimParams {
        tasks: 500,
        workers: 16,
        crash_prob: 0.3,
        seed: 99,
    });
    assert!(r.violations.is_empty(), "{:?}", r.violations);
    assert_eq!(r.delivered, 500);
    assert!(r.crashes > 0 && r.late_returns > 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn every_task_is_delivered_once(tasks in 1usize..200, workers in 1usize..16, crash in 0.0f64..0.3, seed in any::<u64>()) {
        let r = simulate(SimParams { tasks, workers, crash_prob: crash, seed });
        prop_assert!(r.violations.is_empty(), "{:?}", r.violations);
        prop_assert_eq!(r.delivered, tasks);
    }
}

/// Real threads racing on one queue: workers that sometimes abandon a task
/// (left to the reaper) and sometimes return twice.
#[test]
fn threaded_workers_deliver_each_result_once() {
    let queue = Arc::new(TaskQueue::new(QueueConfig {
        task_timeout: 0.05,
        max_retries: 50,
    }));
    let n = 400;
    for i in 0..n {
        queue.submit(common::task(&format!("t{i}"))).unwrap();
    }
    let stop = Arc::new(AtomicBool::new(false));
    let mut handles = Vec::new();
    for w in 0..8 {
        let (queue, stop) = (queue.clone(), stop.clone());
        handles.push(std::thread::spawn(move || {
            let name = format!("w{w}");
            let mut k = 0u64;
            while !stop.load(Ordering::Relaxed) {
                k += 1;
                let Some(t) = queue.worker_pull(&name) else {
                    std::thread::sleep(Duration::from_millis(1));
                    continue;
                };
                if k.is_multiple_of(7) {
                    continue;
                }
                let r = common::ok_result(&t.task_id, &name, 0.5);
                queue.worker_return(r.clone());
                if k.is_multiple_of(5) {
                    assert_eq!(queue.worker_return(r), ReturnOutcome::Duplicate);
                }
            }
        }));
    }
    let reaper = {
        let (queue, stop) = (queue.clone(), stop.clone());
        std::thread::spawn(move || {
            while !stop.load(Ordering::Relaxed) {
                queue.reap_timeouts(queue.now());
                std::thread::sleep(Duration::from_millis(5));
            }
        })
    };
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    while seen.len() < n {
        let r = queue.next_result(Duration::from_secs(20)).expect("result within 20 s");
        *seen.entry(r.task_id).or_default() += 1;
    }
    stop.store(true, Ordering::Relaxed);
    for h in handles {
        h.join().unwrap();
    }
    reaper.join().unwrap();
    assert!(queue.try_next_result().is_none());
    assert!(seen.values().all(|&k| k == 1));
    let snap = queue.snapshot();
    assert_eq!(snap.done.len(), n);
    assert!(snap.pending.is_empty() && snap.in_flight.is_empty());
}
