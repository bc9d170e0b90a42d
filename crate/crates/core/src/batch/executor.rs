use std::panic::{catch_unwind, AssertUnwindSafe};

use crossbeam_channel::unbounded;

/// Runs indexed tasks somewhere and hands back every result with its index.
///
/// The thread pool below is the only backend; a cluster scheduler would
/// implement the same contract.
pub trait Executor {
    fn workers(&self) -> usize;

    /// Runs `task(i)` for every `i < n`. A panicking task yields `Err` with
    /// the panic message. Results come back in index order.
    fn execute<R, F>(&self, n: usize, task: F) -> Vec<Result<R, String>>
    where
        R: Send,
        F: Fn(usize) -> R + Sync;
}

/// Fixed-size pool: workers pull task indices from a shared queue and send
/// results to the calling thread over a channel.
#[derive(Clone, Copy, Debug)]
pub struct ThreadPoolExecutor {
    workers: usize,
}

impl ThreadPoolExecutor {
    pub fn new(workers: usize) -> Self {
        ThreadPoolExecutor {
            workers: workers.max(1),
        }
    }
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "task panicked".to_string())
}

impl Executor for ThreadPoolExecutor {
    fn workers(&self) -> usize {
        self.workers
    }

    fn execute<R, F>(&self, n: usize, task: F) -> Vec<Result<R, String>>
    where
        R: Send,
        F: Fn(usize) -> R + Sync,
    {
        let (task_tx, task_rx) = unbounded::<usize>();
        let (result_tx, result_rx) = unbounded::<(usize, Result<R, String>)>();
        for i in 0..n {
            task_tx.send(i).expect("queue open");
        }
        drop(task_tx);

        let task = &task;
        let mut slots: Vec<Option<Result<R, String>>> = (0..n).map(|_| None).collect();
        std::thread::scope(|s| {
            for _ in 0..self.workers.min(n.max(1)) {
                let rx = task_rx.clone();
                let tx = result_tx.clone();
                s.spawn(move || {
                    for i in rx.iter() {
                        let r = catch_unwind(AssertUnwindSafe(|| task(i))).map_err(panic_message);
                        if tx.send((i, r)).is_err() {
                            break;
                        }
                    }
                });
            }
            drop(result_tx);
            for (i, r) in result_rx.iter() {
                slots[i] = Some(r);
            }
        });
        slots
            .into_iter()
            .map(|s| s.expect("every task reports"))
            .collect()
    }
}
