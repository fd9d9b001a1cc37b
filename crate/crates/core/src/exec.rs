//! Trial scheduling.
//!
//! Work is cut into fixed-size blocks of consecutive trial indices. Block
//! boundaries depend only on the trial count, and results come back in block
//! order, so the output of every estimator is the same for any executor.

use alloc::vec::Vec;

/// Trials per block.
pub const BLOCK_TRIALS: u64 = 1024;

pub trait Executor {
    /// Evaluates `work(b)` for every block `b in 0..blocks` and returns the
    /// results indexed by block.
    fn map_blocks<T, F>(&self, blocks: usize, work: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map_blocks<T, F>(&self, blocks: usize, work: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        (0..blocks).map(work).collect()
    }
}

impl<E: Executor + ?Sized> Executor for &E {
    fn map_blocks<T, F>(&self, blocks: usize, work: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        (**self).map_blocks(blocks, work)
    }
}

/// Runs `per_trial` over `0..trials`, folding each block into a fresh
/// accumulator, and returns the block accumulators in order.
pub fn fold_trials<E, A, F>(exec: &E, trials: u64, per_trial: F) -> Vec<A>
where
    E: Executor + ?Sized,
    A: Default + Send,
    F: Fn(u64, &mut A) + Sync,
{
    let blocks = trials.div_ceil(BLOCK_TRIALS) as usize;
    exec.map_blocks(blocks, |b| {
        let start = b as u64 * BLOCK_TRIALS;
        let end = (start + BLOCK_TRIALS).min(trials);
        let mut acc = A::default();
        for trial in start..end {
            per_trial(trial, &mut acc);
        }
        acc
    })
}
