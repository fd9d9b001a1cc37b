use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicUsize, Ordering};

use contention_core::Executor;

/// Scoped worker threads pulling block indices from a shared counter.
/// Results are put back in block order, so output never depends on the
/// worker count.
#[derive(Debug, Clone, Copy)]
pub struct ThreadPool {
    workers: usize,
}

impl ThreadPool {
    pub fn new(workers: usize) -> Self {
        Self { workers: workers.max(1) }
    }

    pub fn available() -> Self {
        Self::new(std::thread::available_parallelism().map_or(1, NonZeroUsize::get))
    }

    pub fn workers(&self) -> usize {
        self.workers
    }
}

impl Executor for ThreadPool {
    fn map_blocks<T, F>(&self, blocks: usize, work: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        if self.workers == 1 || blocks <= 1 {
            return (0..blocks).map(work).collect();
        }
        let next = AtomicUsize::new(0);
        let mut slots: Vec<Option<T>> = (0..blocks).map(|_| None).collect();
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..self.workers.min(blocks))
                .map(|_| {
                    scope.spawn(|| {
                        let mut done = Vec::new();
                        loop {
                            let b = next.fetch_add(1, Ordering::Relaxed);
                            if b >= blocks {
                                break done;
                            }
                            done.push((b, work(b)));
                        }
                    })
                })
                .collect();
            for h in handles {
                match h.join() {
                    Ok(done) => {
                        for (b, t) in done {
                            slots[b] = Some(t);
                        }
                    }
                    Err(panic) => std::panic::resume_unwind(panic),
                }
            }
        });
        slots.into_iter().map(|s| s.expect("every block is claimed once")).collect()
    }
}
