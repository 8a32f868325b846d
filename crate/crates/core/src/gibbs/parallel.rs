//! Order-independent parallel task execution.
//!
//! Tasks own their RNG substreams, so output slot `i` depends only on task
//! `i`; results are identical for any thread count or scheduling order.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

/// Run `n_tasks` independent tasks on up to `n_threads` workers, returning
/// results in task order.
pub fn run_tasks<T, F>(n_threads: usize, n_tasks: usize, task: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    if n_tasks == 0 {
        return Vec::new();
    }
    let workers = n_threads.max(1).min(n_tasks);
    if workers == 1 {
        return (0..n_tasks).map(task).collect();
    }

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, T)>();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            let task = &task;
            scope.spawn(move || loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                if idx >= n_tasks {
                    break;
                }
                if tx.send((idx, task(idx))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut slots: Vec<Option<T>> = (0..n_tasks).map(|_| None).collect();
        for (idx, value) in rx {
            slots[idx] = Some(value);
        }
        slots
            .into_iter()
            .map(|s| s.expect("worker panicked before completing its task"))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_ordered_and_thread_count_invariant() {
        let f = |i: usize| (i * i) as u64;
        let serial = run_tasks(1, 37, f);
        let parallel = run_tasks(8, 37, f);
        assert_eq!(serial, parallel);
        assert_eq!(serial[6], 36);
    }

    #[test]
    fn zero_and_single_task() {
        assert!(run_tasks::<u64, _>(4, 0, |_| 0).is_empty());
        assert_eq!(run_tasks(4, 1, |i| i + 1), vec![1]);
    }
}
